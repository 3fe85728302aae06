#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "flowinv/nn.hpp"

namespace flowinv {

// Checkpoint layout: 8-byte magic "FLOWINV1", little-endian uint64 header
// length, JSON header (format version, architecture, caller metadata), then
// the flat parameter vector as little-endian float64 in declaration order.
// Round trips are bit-identical.
inline constexpr char kCheckpointMagic[9] = "FLOWINV1";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t to_le(std::uint64_t x) {
    if constexpr (std::endian::native == std::endian::little) return x;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

inline void write_doubles_le(std::ostream& os, const std::vector<double>& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        bits = to_le(bits);
        os.write(reinterpret_cast<const char*>(&bits), 8);
    }
}

inline void read_doubles_le(std::istream& is, std::vector<double>& v) {
    for (double& d : v) {
        std::uint64_t bits;
        is.read(reinterpret_cast<char*>(&bits), 8);
        bits = to_le(bits);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace detail

inline nlohmann::json arch_to_json(const NeuralFieldArch& a) {
    return nlohmann::json{{"channels", a.channels}, {"height", a.height},     {"width", a.width},
                          {"time_dim", a.time_dim}, {"cond_dim", a.cond_dim}, {"hidden", a.hidden},
                          {"vocab", a.vocab}};
}

inline NeuralFieldArch arch_from_json(const nlohmann::json& j) {
    NeuralFieldArch a;
    a.channels = j.at("channels").get<int>();
    a.height = j.at("height").get<int>();
    a.width = j.at("width").get<int>();
    a.time_dim = j.at("time_dim").get<int>();
    a.cond_dim = j.at("cond_dim").get<int>();
    a.hidden = j.at("hidden").get<std::vector<int>>();
    a.vocab = j.at("vocab").get<int>();
    return a;
}

inline void save_checkpoint(const std::string& path, const NeuralField& field,
                            const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["arch"] = arch_to_json(field.arch());
    header["param_count"] = field.params().size();
    header["meta"] = meta;
    std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kCheckpointMagic, 8);
    std::uint64_t len = detail::to_le(static_cast<std::uint64_t>(hs.size()));
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    detail::write_doubles_le(os, field.params());
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    NeuralField field;
    nlohmann::json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic (not a FLOWINV1 checkpoint)");
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), 8);
    len = detail::to_le(len);
    if (!is || len > (1u << 24)) throw std::runtime_error("load_checkpoint: bad header length");
    std::string hs(static_cast<std::size_t>(len), '\0');
    is.read(hs.data(), static_cast<std::streamsize>(len));
    if (!is) throw std::runtime_error("load_checkpoint: truncated header");

    nlohmann::json header = nlohmann::json::parse(hs);
    int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " + std::to_string(version));

    NeuralField field(arch_from_json(header.at("arch")));
    std::size_t count = header.at("param_count").get<std::size_t>();
    if (count != field.params().size())
        throw std::runtime_error("load_checkpoint: parameter count does not match architecture");
    detail::read_doubles_le(is, field.params());
    if (!is) throw std::runtime_error("load_checkpoint: truncated payload");
    is.peek();
    if (!is.eof()) throw std::runtime_error("load_checkpoint: trailing bytes after payload");

    return LoadedCheckpoint{std::move(field), header.value("meta", nlohmann::json::object())};
}

}  // namespace flowinv
