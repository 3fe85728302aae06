#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowinv/tensor.hpp"

namespace flowinv {

inline double mse(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        double d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline constexpr double kPsnrCapDb = 99.0;

// 10*log10(max_val^2 / mse); the zero-MSE infinity is reported as 99 dB.
inline double psnr(const Latent& a, const Latent& b, double max_val = 1.0) {
    double m = mse(a, b);
    if (m == 0.0) return kPsnrCapDb;
    return 10.0 * std::log10(max_val * max_val / m);
}

inline double psnr_from_mse(double m, double max_val = 1.0) {
    if (m == 0.0) return kPsnrCapDb;
    return 10.0 * std::log10(max_val * max_val / m);
}

namespace detail {

struct SsimWindows {
    static constexpr int kSize = 8;
    static constexpr int kStride = 4;
    static constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
    static constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2
};

inline double ssim_window(const Latent& a, const Latent& b, int ci, int y0, int x0) {
    constexpr int n = SsimWindows::kSize * SsimWindows::kSize;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int y = y0; y < y0 + SsimWindows::kSize; ++y)
        for (int x = x0; x < x0 + SsimWindows::kSize; ++x) {
            double xv = a.at(ci, y, x), yv = b.at(ci, y, x);
            sx += xv;
            sy += yv;
            sxx += xv * xv;
            syy += yv * yv;
            sxy += xv * yv;
        }
    double mx = sx / n, my = sy / n;
    double vx = sxx / n - mx * mx;
    double vy = syy / n - my * my;
    double cxy = sxy / n - mx * my;
    double num = (2.0 * mx * my + SsimWindows::kC1) * (2.0 * cxy + SsimWindows::kC2);
    double den = (mx * mx + my * my + SsimWindows::kC1) * (vx + vy + SsimWindows::kC2);
    return num / den;
}

}  // namespace detail

// Windowed SSIM: 8x8 uniform windows, stride 4, K1 = 0.01, K2 = 0.03,
// dynamic range 1, averaged over all fully contained windows of all
// channels.
inline double ssim(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "ssim");
    if (a.h < detail::SsimWindows::kSize || a.w < detail::SsimWindows::kSize)
        throw std::invalid_argument("ssim: image smaller than one 8x8 window");
    double acc = 0.0;
    int count = 0;
    for (int ci = 0; ci < a.c; ++ci)
        for (int y0 = 0; y0 + detail::SsimWindows::kSize <= a.h; y0 += detail::SsimWindows::kStride)
            for (int x0 = 0; x0 + detail::SsimWindows::kSize <= a.w; x0 += detail::SsimWindows::kStride) {
                acc += detail::ssim_window(a, b, ci, y0, x0);
                ++count;
            }
    return acc / count;
}

// Region-restricted edit quality numbers. Background metrics compare
// original vs edited over pixels with region_mask == 0; the edit-attribute
// score is the target-minus-source color-channel mean inside the region of
// the edited image, clamped to [-1, 1].
struct RegionReport {
    double bg_mse = 0.0;
    double bg_psnr = 0.0;
    double bg_ssim = 0.0;  // NaN when no 8x8 window is fully background
    double edit_score = 0.0;
};

inline RegionReport region_report(const Latent& original, const Latent& edited, const SpatialMap& region_mask,
                                  int source_color, int target_color) {
    require_same_shape(original, edited, "region_report");
    require_map_matches(original, region_mask, "region_report");
    if (source_color < 0 || source_color >= original.c || target_color < 0 || target_color >= original.c)
        throw std::invalid_argument("region_report: color channel out of range");

    std::size_t n_bg = 0, n_region = 0;
    for (double m : region_mask.v) (m != 0.0 ? n_region : n_bg)++;
    if (n_bg == 0) throw std::invalid_argument("region_report: empty background");
    if (n_region == 0) throw std::invalid_argument("region_report: empty region");

    RegionReport rep;

    double acc = 0.0;
    for (int ci = 0; ci < original.c; ++ci)
        for (int y = 0; y < original.h; ++y)
            for (int x = 0; x < original.w; ++x) {
                if (region_mask.at(y, x) != 0.0) continue;
                double d = original.at(ci, y, x) - edited.at(ci, y, x);
                acc += d * d;
            }
    rep.bg_mse = acc / static_cast<double>(n_bg * original.c);
    rep.bg_psnr = psnr_from_mse(rep.bg_mse);

    // SSIM over windows that contain no region pixel.
    double ssim_acc = 0.0;
    int ssim_count = 0;
    if (original.h >= detail::SsimWindows::kSize && original.w >= detail::SsimWindows::kSize) {
        for (int y0 = 0; y0 + detail::SsimWindows::kSize <= original.h; y0 += detail::SsimWindows::kStride)
            for (int x0 = 0; x0 + detail::SsimWindows::kSize <= original.w; x0 += detail::SsimWindows::kStride) {
                bool pure_bg = true;
                for (int y = y0; pure_bg && y < y0 + detail::SsimWindows::kSize; ++y)
                    for (int x = x0; x < x0 + detail::SsimWindows::kSize; ++x)
                        if (region_mask.at(y, x) != 0.0) {
                            pure_bg = false;
                            break;
                        }
                if (!pure_bg) continue;
                for (int ci = 0; ci < original.c; ++ci) ssim_acc += detail::ssim_window(original, edited, ci, y0, x0);
                ssim_count += original.c;
            }
    }
    rep.bg_ssim = ssim_count > 0 ? ssim_acc / ssim_count : std::numeric_limits<double>::quiet_NaN();

    double tgt = 0.0, src = 0.0;
    for (int y = 0; y < original.h; ++y)
        for (int x = 0; x < original.w; ++x) {
            if (region_mask.at(y, x) == 0.0) continue;
            tgt += edited.at(target_color, y, x);
            src += edited.at(source_color, y, x);
        }
    rep.edit_score = std::clamp((tgt - src) / static_cast<double>(n_region), -1.0, 1.0);
    return rep;
}

}  // namespace flowinv
