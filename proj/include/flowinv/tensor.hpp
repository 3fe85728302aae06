#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowinv {

// Thrown when a solver or field produces a non-finite latent. step_index is
// the 1-based grid interval that produced the value (0 = initial state).
struct NumericError : std::runtime_error {
    NumericError(const std::string& what, int step) : std::runtime_error(what), step_index(step) {}
    int step_index;
};

// Dense [C,H,W] array of doubles, row-major with channel as the outermost
// axis. This is the Z of every algorithm; velocities share the type.
struct Latent {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Latent() = default;
    Latent(int c_, int h_, int w_, double fill = 0.0) : c(c_), h(h_), w(w_) {
        if (c_ < 1 || h_ < 1 || w_ < 1) throw std::invalid_argument("Latent: all dims must be >= 1");
        v.assign(static_cast<std::size_t>(c_) * h_ * w_, fill);
    }

    std::size_t size() const { return v.size(); }
    std::size_t idx(int ci, int y, int x) const {
        return (static_cast<std::size_t>(ci) * h + y) * w + x;
    }
    double& at(int ci, int y, int x) { return v[idx(ci, y, x)]; }
    double at(int ci, int y, int x) const { return v[idx(ci, y, x)]; }

    bool same_shape(const Latent& o) const { return c == o.c && h == o.h && w == o.w; }

    bool operator==(const Latent& o) const { return c == o.c && h == o.h && w == o.w && v == o.v; }
};

// Per-pixel [H,W] map; guidance masks and region masks live here.
struct SpatialMap {
    int h = 0, w = 0;
    std::vector<double> v;

    SpatialMap() = default;
    SpatialMap(int h_, int w_, double fill = 0.0) : h(h_), w(w_) {
        if (h_ < 1 || w_ < 1) throw std::invalid_argument("SpatialMap: dims must be >= 1");
        v.assign(static_cast<std::size_t>(h_) * w_, fill);
    }

    std::size_t size() const { return v.size(); }
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }

    bool operator==(const SpatialMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

inline void require_same_shape(const Latent& a, const Latent& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

inline void require_map_matches(const Latent& a, const SpatialMap& m, const char* op) {
    if (a.h != m.h || a.w != m.w)
        throw std::invalid_argument(std::string(op) + ": [H,W] map does not match latent");
}

// --- elementwise ops -------------------------------------------------------

inline Latent operator+(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "operator+");
    Latent out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

inline Latent operator-(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "operator-");
    Latent out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

inline Latent operator*(double s, const Latent& a) {
    Latent out = a;
    for (double& x : out.v) x *= s;
    return out;
}

// a*z + b*d in one pass; the solver step primitive.
inline Latent affine(double a, const Latent& z, double b, const Latent& d) {
    require_same_shape(z, d, "affine");
    Latent out = z;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * z.v[i] + b * d.v[i];
    return out;
}

// z + b*d (a = 1 case kept separate so identity steps stay bit-exact).
inline Latent add_scaled(const Latent& z, double b, const Latent& d) {
    require_same_shape(z, d, "add_scaled");
    Latent out = z;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = z.v[i] + b * d.v[i];
    return out;
}

// --- [H,W]-over-C broadcast ops --------------------------------------------

// m ⊙ v with the map broadcast over channels.
inline Latent mul_mask(const SpatialMap& m, const Latent& a) {
    require_map_matches(a, m, "mul_mask");
    Latent out = a;
    std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
    for (int ci = 0; ci < a.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) out.v[ci * plane + p] = a.v[ci * plane + p] * m.v[p];
    return out;
}

// m ⊙ vt + (1 − m) ⊙ vs, map broadcast over channels.
inline Latent mask_blend(const SpatialMap& m, const Latent& vt, const Latent& vs) {
    require_same_shape(vt, vs, "mask_blend");
    require_map_matches(vt, m, "mask_blend");
    Latent out = vt;
    std::size_t plane = static_cast<std::size_t>(vt.h) * vt.w;
    for (int ci = 0; ci < vt.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t i = ci * plane + p;
            out.v[i] = m.v[p] * vt.v[i] + (1.0 - m.v[p]) * vs.v[i];
        }
    return out;
}

// s * (1 + m) ⊙ a, map broadcast over channels.
inline Latent scaled_one_plus_mask(double s, const SpatialMap& m, const Latent& a) {
    require_map_matches(a, m, "scaled_one_plus_mask");
    Latent out = a;
    std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
    for (int ci = 0; ci < a.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t i = ci * plane + p;
            out.v[i] = s * (1.0 + m.v[p]) * a.v[i];
        }
    return out;
}

// --- reductions (reference order: channel-outer, then row-major) ------------

inline double sum(const Latent& a) {
    double acc = 0.0;
    for (double x : a.v) acc += x;
    return acc;
}

inline double mean(const Latent& a) { return sum(a) / static_cast<double>(a.size()); }

inline double l2_norm(const Latent& a) {
    double acc = 0.0;
    for (double x : a.v) acc += x * x;
    return std::sqrt(acc);
}

inline double max_abs(const Latent& a) {
    double m = 0.0;
    for (double x : a.v) m = std::max(m, std::fabs(x));
    return m;
}

inline double max_abs_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

inline bool all_finite(const Latent& a) {
    for (double x : a.v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const SpatialMap& m) {
    for (double x : m.v)
        if (!std::isfinite(x)) return false;
    return true;
}

// --- channel reductions and mask normalization ------------------------------

// out[h,w] = (1/C) * sum_c |v[c,h,w]|. Channel-permutation invariant.
inline SpatialMap channel_mean_abs(const Latent& a) {
    SpatialMap out(a.h, a.w, 0.0);
    std::size_t plane = out.size();
    for (int ci = 0; ci < a.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) out.v[p] += std::fabs(a.v[ci * plane + p]);
    for (double& x : out.v) x /= static_cast<double>(a.c);
    return out;
}

// Signed variant, kept for comparison against the absolute-value mask.
inline SpatialMap channel_mean_signed(const Latent& a) {
    SpatialMap out(a.h, a.w, 0.0);
    std::size_t plane = out.size();
    for (int ci = 0; ci < a.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) out.v[p] += a.v[ci * plane + p];
    for (double& x : out.v) x /= static_cast<double>(a.c);
    return out;
}

inline constexpr double kMaskRangeEps = 1e-12;

// (m − min)/(max − min); collapses to the neutral constant 0.5 when the
// input range is below kMaskRangeEps (no spatial signal).
inline SpatialMap minmax_normalize(const SpatialMap& m) {
    double lo = m.v[0], hi = m.v[0];
    for (double x : m.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    SpatialMap out(m.h, m.w, 0.5);
    if (hi - lo < kMaskRangeEps) return out;
    double range = hi - lo;
    // divide (not multiply by the reciprocal) so min maps to exactly 0 and
    // max to exactly 1
    for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = (m.v[i] - lo) / range;
    return out;
}

inline double map_mean(const SpatialMap& m) {
    double acc = 0.0;
    for (double x : m.v) acc += x;
    return acc / static_cast<double>(m.size());
}

inline double map_min(const SpatialMap& m) { return *std::min_element(m.v.begin(), m.v.end()); }
inline double map_max(const SpatialMap& m) { return *std::max_element(m.v.begin(), m.v.end()); }

// Mean of m over pixels where the binary selector is nonzero (inside=true)
// or zero (inside=false). Returns NaN for an empty selection.
inline double map_mean_where(const SpatialMap& m, const SpatialMap& selector, bool inside) {
    if (m.h != selector.h || m.w != selector.w)
        throw std::invalid_argument("map_mean_where: shape mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.v.size(); ++i) {
        bool sel = selector.v[i] != 0.0;
        if (sel == inside) {
            acc += m.v[i];
            ++n;
        }
    }
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return acc / static_cast<double>(n);
}

}  // namespace flowinv
