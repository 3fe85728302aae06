#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowinv/field.hpp"
#include "flowinv/rng.hpp"
#include "flowinv/tensor.hpp"

namespace flowinv {

// Condition vocabulary: (color in {red, green, blue}) x (shape in {circle,
// square}), token = color*2 + shape.
inline constexpr int kShapesVocab = 6;
inline constexpr std::array<const char*, kShapesVocab> kConditionNames = {
    "red_circle", "red_square", "green_circle", "green_square", "blue_circle", "blue_square"};

inline int condition_color(int token) { return token / 2; }
inline int condition_shape(int token) { return token % 2; }
inline int make_token(int color, int shape) { return color * 2 + shape; }

inline std::string condition_name(const Condition& c) {
    if (c.is_null()) return "null";
    int tok = *c.token;
    if (tok < 0 || tok >= kShapesVocab) throw std::invalid_argument("condition_name: unknown token");
    return kConditionNames[static_cast<std::size_t>(tok)];
}

inline Condition condition_from_name(const std::string& name) {
    if (name == "null") return Condition::null();
    for (int t = 0; t < kShapesVocab; ++t)
        if (name == kConditionNames[static_cast<std::size_t>(t)]) return Condition::of(t);
    throw std::invalid_argument("unknown condition token: " + name);
}

inline constexpr int kShapesChannels = 3;
inline constexpr int kShapesHeight = 24;
inline constexpr int kShapesWidth = 24;

// [3,24,24] image in [0,1], its condition token, and the exact pixel set of
// the drawn shape. Background texture is condition-independent.
struct ShapesSample {
    Latent image;
    int token = 0;
    SpatialMap region_mask;
};

inline std::vector<ShapesSample> gen_shapes_dataset(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_shapes_dataset: n must be >= 1");
    std::vector<ShapesSample> out;
    out.reserve(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (int s = 0; s < n; ++s) {
        ShapesSample sample;
        sample.token = rng.next_below(kShapesVocab);
        int color = condition_color(sample.token);
        int shape = condition_shape(sample.token);

        // Sinusoidal gray background with random orientation and phase.
        double base = 0.15 + 0.20 * rng.next_double();
        double fx = 1.0 + rng.next_below(3);
        double fy = 1.0 + rng.next_below(3);
        double phase = 6.283185307179586 * rng.next_double();
        std::array<double, 3> tint = {0.0, 0.0, 0.0};
        for (double& t : tint) t = 0.06 * (rng.next_double() - 0.5);

        sample.image = Latent(kShapesChannels, kShapesHeight, kShapesWidth);
        sample.region_mask = SpatialMap(kShapesHeight, kShapesWidth, 0.0);

        // jitter kept tight enough that most frames retain a fully
        // background 8x8 window for the region SSIM
        double cx = 9.5 + 5.0 * rng.next_double();
        double cy = 9.5 + 5.0 * rng.next_double();
        double r = 3.5 + 2.5 * rng.next_double();
        double fill_hi = 0.80 + 0.10 * rng.next_double();
        double fill_lo = 0.12 + 0.05 * rng.next_double();

        for (int y = 0; y < kShapesHeight; ++y)
            for (int x = 0; x < kShapesWidth; ++x) {
                double dx = x - cx, dy = y - cy;
                bool inside = shape == 0 ? (dx * dx + dy * dy <= r * r)
                                         : (std::fabs(dx) <= r && std::fabs(dy) <= r);
                if (inside) {
                    sample.region_mask.at(y, x) = 1.0;
                    for (int ci = 0; ci < 3; ++ci)
                        sample.image.at(ci, y, x) = ci == color ? fill_hi : fill_lo;
                } else {
                    double tex = base + 0.08 * std::sin(6.283185307179586 * (fx * x + fy * y) / 24.0 + phase);
                    for (int ci = 0; ci < 3; ++ci)
                        sample.image.at(ci, y, x) = std::clamp(tex + tint[static_cast<std::size_t>(ci)], 0.0, 1.0);
                }
            }
        out.push_back(std::move(sample));
    }
    return out;
}

// 2D toy: two Gaussian clusters on the diagonal, one condition token each.
// C = 2, H = W = 1.
struct Toy2dSample {
    Latent z0;
    int token = 0;
};

inline std::vector<Toy2dSample> gen_toy2d_dataset(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_toy2d_dataset: n must be >= 1");
    std::vector<Toy2dSample> out;
    out.reserve(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (int s = 0; s < n; ++s) {
        Toy2dSample sample;
        sample.token = rng.next_below(2);
        double center = sample.token == 0 ? -1.2 : 1.2;
        sample.z0 = Latent(2, 1, 1);
        sample.z0.v[0] = center + 0.25 * rng.next_normal();
        sample.z0.v[1] = center + 0.25 * rng.next_normal();
        out.push_back(std::move(sample));
    }
    return out;
}

// A recoloring task: same shape, different color, with the sample's ground
// truth region as the edit region.
struct EditCase {
    int sample_index = 0;
    int source_token = 0;
    int target_token = 0;
};

inline std::vector<EditCase> make_edit_cases(const std::vector<ShapesSample>& samples, int n_cases,
                                             std::uint64_t seed) {
    if (n_cases < 1 || samples.empty()) throw std::invalid_argument("make_edit_cases: bad arguments");
    std::vector<EditCase> cases;
    cases.reserve(static_cast<std::size_t>(n_cases));
    Rng rng(seed);
    for (int i = 0; i < n_cases; ++i) {
        EditCase ec;
        ec.sample_index = i % static_cast<int>(samples.size());
        ec.source_token = samples[static_cast<std::size_t>(ec.sample_index)].token;
        int src_color = condition_color(ec.source_token);
        int tgt_color = (src_color + 1 + rng.next_below(2)) % 3;
        ec.target_token = make_token(tgt_color, condition_shape(ec.source_token));
        cases.push_back(ec);
    }
    return cases;
}

}  // namespace flowinv
