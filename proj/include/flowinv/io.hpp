#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowinv/tensor.hpp"

namespace flowinv {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

inline unsigned char quantize_byte(double x) {
    double c = std::clamp(x, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(255.0 * c));
}

// Binary PPM (P6) for 3-channel latents, PGM (P5) for single-channel; values
// are clamped to [0,1] and quantized to 8 bits. The comment (one line) is
// used to echo the resolved run config.
inline void write_ppm(const std::string& path, const Latent& img, const std::string& comment = "") {
    if (img.c != 3 && img.c != 1) throw std::invalid_argument("write_ppm: latent must have 1 or 3 channels");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
    os << (img.c == 3 ? "P6\n" : "P5\n");
    if (!comment.empty()) os << "# " << comment << "\n";
    os << img.w << " " << img.h << "\n255\n";
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ci = 0; ci < img.c; ++ci) {
                unsigned char b = quantize_byte(img.at(ci, y, x));
                os.write(reinterpret_cast<const char*>(&b), 1);
            }
    if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

inline void write_pgm(const std::string& path, const SpatialMap& map, const std::string& comment = "") {
    Latent img(1, map.h, map.w);
    img.v = map.v;
    write_ppm(path, img, comment);
}

namespace detail {

inline void skip_pnm_junk(std::istream& is) {
    for (;;) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            return;
        }
    }
}

}  // namespace detail

inline Latent read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    is >> magic;
    int channels;
    if (magic == "P6")
        channels = 3;
    else if (magic == "P5")
        channels = 1;
    else
        throw std::runtime_error("read_ppm: unsupported magic " + magic);
    detail::skip_pnm_junk(is);
    int w, h, maxval;
    is >> w;
    detail::skip_pnm_junk(is);
    is >> h;
    detail::skip_pnm_junk(is);
    is >> maxval;
    if (!is || w < 1 || h < 1 || maxval != 255) throw std::runtime_error("read_ppm: bad header in " + path);
    is.get();  // single whitespace before payload
    Latent img(channels, h, w);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw std::runtime_error("read_ppm: truncated payload in " + path);
        for (int x = 0; x < w; ++x)
            for (int ci = 0; ci < channels; ++ci)
                img.at(ci, y, x) = row[static_cast<std::size_t>(x) * channels + ci] / 255.0;
    }
    return img;
}

inline SpatialMap read_pgm(const std::string& path) {
    Latent img = read_ppm(path);
    if (img.c != 1) throw std::runtime_error("read_pgm: not a single-channel image: " + path);
    SpatialMap map(img.h, img.w);
    map.v = img.v;
    return map;
}

// Row-oriented CSV with an optional '#'-prefixed provenance line before the
// header. Numeric cells go through format_double so reruns are byte-stable.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns, const std::string& comment = "")
        : os_(path) {
        if (!os_) throw std::runtime_error("CsvWriter: cannot open " + path);
        if (!comment.empty()) os_ << "# " << comment << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
        os_ << "\n";
        width_ = columns.size();
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw std::invalid_argument("CsvWriter: wrong cell count");
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << "\n";
    }

    ~CsvWriter() { os_.flush(); }

private:
    std::ofstream os_;
    std::size_t width_;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        throw std::invalid_argument("CsvTable: no column " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (table.columns.empty())
            table.columns = split(line);
        else
            table.rows.push_back(split(line));
    }
    return table;
}

// Minimal deterministic SVG polyline plot with optional log10 axes.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel, bool logx = false, bool logy = false)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), logx_(logx),
          logy_(logy) {}

    void add_series(const std::string& name, std::vector<double> xs, std::vector<double> ys) {
        if (xs.size() != ys.size() || xs.empty()) throw std::invalid_argument("SvgPlot: bad series");
        series_.push_back({name, std::move(xs), std::move(ys)});
    }

    void write(const std::string& path, const std::string& comment = "") const {
        if (series_.empty()) throw std::invalid_argument("SvgPlot: no series");
        constexpr double W = 640, H = 480, ml = 70, mr = 170, mt = 40, mb = 50;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                double x = tx(s.xs[i]), y = ty(s.ys[i]);
                xmin = std::min(xmin, x), xmax = std::max(xmax, x);
                ymin = std::min(ymin, y), ymax = std::max(ymax, y);
            }
        if (xmax <= xmin) xmax = xmin + 1;
        if (ymax <= ymin) ymax = ymin + 1;
        auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * (W - ml - mr); };
        auto py = [&](double y) { return H - mb - (ty(y) - ymin) / (ymax - ymin) * (H - mt - mb); };

        static const char* colors[] = {"#4363d8", "#e6194b", "#3cb44b", "#f58231", "#911eb4", "#46f0f0"};
        std::ofstream os(path);
        if (!os) throw std::runtime_error("SvgPlot: cannot open " + path);
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
        if (!comment.empty()) os << "<!-- " << comment << " -->\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title_
           << "</text>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
           << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
           << xlabel_ << "</text>\n";
        os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
           << (mt + H - mb) / 2 << ")\" text-anchor=\"middle\">" << ylabel_ << "</text>\n";
        // axis end labels in data units
        os << "<text x=\"" << ml << "\" y=\"" << H - mb + 16 << "\" font-size=\"10\">" << format_double(inv_tx(xmin))
           << "</text>\n";
        os << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"end\" font-size=\"10\">"
           << format_double(inv_tx(xmax)) << "</text>\n";
        os << "<text x=\"" << ml - 4 << "\" y=\"" << H - mb << "\" text-anchor=\"end\" font-size=\"10\">"
           << format_double(inv_ty(ymin)) << "</text>\n";
        os << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 10 << "\" text-anchor=\"end\" font-size=\"10\">"
           << format_double(inv_ty(ymax)) << "</text>\n";
        for (std::size_t si = 0; si < series_.size(); ++si) {
            const auto& s = series_[si];
            const char* color = colors[si % 6];
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.xs.size(); ++i)
                os << format_double(px(s.xs[i])) << "," << format_double(py(s.ys[i])) << " ";
            os << "\"/>\n";
            double ly = mt + 16.0 * static_cast<double>(si) + 10;
            os << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 30 << "\" y2=\"" << ly
               << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            os << "<text x=\"" << W - mr + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name
               << "</text>\n";
        }
        os << "</svg>\n";
    }

private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
    };

    double tx(double x) const { return logx_ ? std::log10(x) : x; }
    double ty(double y) const { return logy_ ? std::log10(y) : y; }
    double inv_tx(double x) const { return logx_ ? std::pow(10.0, x) : x; }
    double inv_ty(double y) const { return logy_ ? std::pow(10.0, y) : y; }

    std::string title_, xlabel_, ylabel_;
    bool logx_, logy_;
    std::vector<Series> series_;
};

}  // namespace flowinv
