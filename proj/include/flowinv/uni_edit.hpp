#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "flowinv/sampler.hpp"
#include "flowinv/step_rule.hpp"
#include "flowinv/tensor.hpp"
#include "flowinv/time_grid.hpp"
#include "flowinv/uni_inv.hpp"

namespace flowinv {

enum class MaskMode { Abs, Signed };

// Min-max normalized channel-mean magnitude of the velocity difference; the
// per-pixel edit-relevance weight.
inline SpatialMap guidance_mask(const Latent& v_minus, MaskMode mode = MaskMode::Abs) {
    SpatialMap m = mode == MaskMode::Abs ? channel_mean_abs(v_minus) : channel_mean_signed(v_minus);
    return minmax_normalize(m);
}

// Single-velocity rewriting of the composite edit step (guidance applied as
// a per-pixel-variant CFG weight):
//   v* = v_s + (omega*(1 + m) + m) (.) (v_t - v_s)
inline Latent reformed_velocity(const Latent& v_s, const Latent& v_t, const SpatialMap& m, double omega) {
    require_same_shape(v_s, v_t, "reformed_velocity");
    require_map_matches(v_s, m, "reformed_velocity");
    Latent out = v_s;
    std::size_t plane = static_cast<std::size_t>(v_s.h) * v_s.w;
    for (int ci = 0; ci < v_s.c; ++ci)
        for (std::size_t p = 0; p < plane; ++p) {
            std::size_t i = ci * plane + p;
            double weight = omega * (1.0 + m.v[p]) + m.v[p];
            out.v[i] = v_s.v[i] + weight * (v_t.v[i] - v_s.v[i]);
        }
    return out;
}

struct EditConfig {
    double omega = 5.0;    // guidance strength
    double alpha = 0.6;    // delay rate
    int n_steps = 15;      // N (full-grid step count; the edit runs round(alpha*N) of them)
    Condition source;
    Condition target;
    MaskMode mask_mode = MaskMode::Abs;
    std::optional<double> force_mask;  // pin m_i to a constant (baseline corners)
    bool record_masks = true;
    bool record_latents = false;

    void validate() const {
        if (omega < 0.0) throw std::invalid_argument("EditConfig: omega must be >= 0");
        if (n_steps < 1) throw std::invalid_argument("EditConfig: n_steps must be >= 1");
        if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("EditConfig: alpha must be in (0,1]");
        if (truncated_steps(n_steps, alpha) < 1)
            throw std::invalid_argument("EditConfig: round(alpha*n_steps) must be >= 1");
    }
};

struct EditStepRecord {
    int i = 0;
    double t = 0.0, t_prev = 0.0;
    double mask_mean = 0.0, mask_min = 0.0, mask_max = 0.0;
    double v_src_norm = 0.0, v_tgt_norm = 0.0, stride_norm = 0.0;
    SpatialMap mask;          // populated when record_masks
    Latent corrected_latent;  // populated when record_latents
    Latent next_latent;       // populated when record_latents
};

struct EditTrace {
    Latent output;
    std::vector<double> grid_times;
    std::vector<EditStepRecord> steps;  // in iteration order, i = M..1
    std::uint64_t nfe = 0;              // 3*round(alpha*N) + 1 for Uni-Edit
};

// Delayed-injection editing with region-adaptive correction and velocity
// fusion. Inversion to t_{round(alpha*N)} runs under the source condition;
// per edit step the source/target velocities produce the guidance mask, the
// correction stride omega*(t_{i-1}-t_i)*(1+m)(.)v-, and the fused update
// velocity m(.)v_T + (1-m)(.)v_S. The working set is O(1) latents.
inline EditTrace uni_edit(const VelocityField& field, const Latent& z0, const EditConfig& cfg) {
    cfg.validate();
    TimeGrid grid = uniform_grid(cfg.n_steps, cfg.alpha);
    StepRule rule(StepKind::Euler, field, grid);
    int m_steps = grid.intervals();

    std::uint64_t nfe_before = field.nfe();
    EditTrace trace;
    trace.grid_times = grid.times();

    Latent z = uni_inv(rule, z0, cfg.source).endpoint();

    for (int i = m_steps; i >= 1; --i) {
        double t = grid[i], t_prev = grid[i - 1];
        Latent v_src = field.eval(z, t, cfg.source);
        Latent v_tgt = field.eval(z, t, cfg.target);
        Latent v_minus = v_tgt - v_src;
        SpatialMap mask = cfg.force_mask ? SpatialMap(z.h, z.w, *cfg.force_mask)
                                         : guidance_mask(v_minus, cfg.mask_mode);
        Latent stride = scaled_one_plus_mask(cfg.omega * (t_prev - t), mask, v_minus);
        Latent z_check = z + stride;
        Latent v_fused = mask_blend(mask, v_tgt, v_src);
        z = add_scaled(z_check, t_prev - t, v_fused);
        if (!all_finite(z)) throw NumericError("uni_edit: non-finite latent", i);

        EditStepRecord rec;
        rec.i = i;
        rec.t = t;
        rec.t_prev = t_prev;
        rec.mask_mean = map_mean(mask);
        rec.mask_min = map_min(mask);
        rec.mask_max = map_max(mask);
        rec.v_src_norm = l2_norm(v_src);
        rec.v_tgt_norm = l2_norm(v_tgt);
        rec.stride_norm = l2_norm(stride);
        if (cfg.record_masks) rec.mask = mask;
        if (cfg.record_latents) {
            rec.corrected_latent = z_check;
            rec.next_latent = z;
        }
        trace.steps.push_back(std::move(rec));
    }

    trace.output = std::move(z);
    trace.nfe = field.nfe() - nfe_before;
    return trace;
}

// Uni-Inv to t_{round(alpha*N)} under the source condition, then plain Euler
// sampling under the target condition. No correction, no mask.
inline Latent baseline_delayed_injection(const VelocityField& field, const Latent& z0, const EditConfig& cfg) {
    cfg.validate();
    TimeGrid grid = uniform_grid(cfg.n_steps, cfg.alpha);
    StepRule rule(StepKind::Euler, field, grid);
    Latent z_delay = uni_inv(rule, z0, cfg.source).endpoint();
    return sample(rule, z_delay, cfg.target).endpoint();
}

// Full inversion then full resampling with the target condition (the
// "undue editing" contrast): the alpha = 1 corner of delayed injection.
inline Latent baseline_direct_edit(const VelocityField& field, const Latent& z0, int n_steps,
                                   const Condition& source, const Condition& target) {
    EditConfig cfg;
    cfg.alpha = 1.0;
    cfg.n_steps = n_steps;
    cfg.source = source;
    cfg.target = target;
    return baseline_delayed_injection(field, z0, cfg);
}

struct LatentFusionResult {
    Latent output;
    std::size_t peak_cached_latents = 0;  // inversion trajectory it must keep
    std::uint64_t nfe = 0;
};

// DiffEdit-style latent fusion contrast: per step, blend the edit-branch
// latent with the stored inversion latent using the same guidance mask,
// m (.) edit + (1-m) (.) inversion. Requires caching the entire inversion
// trajectory, unlike velocity fusion.
inline LatentFusionResult baseline_latent_fusion(const VelocityField& field, const Latent& z0,
                                                 const EditConfig& cfg) {
    cfg.validate();
    TimeGrid grid = uniform_grid(cfg.n_steps, cfg.alpha);
    StepRule rule(StepKind::Euler, field, grid);
    int m_steps = grid.intervals();

    std::uint64_t nfe_before = field.nfe();
    Trajectory inv = uni_inv(rule, z0, cfg.source);  // states at t_0..t_M

    Latent z = inv.endpoint();
    for (int i = m_steps; i >= 1; --i) {
        double t = grid[i], t_prev = grid[i - 1];
        Latent v_src = field.eval(z, t, cfg.source);
        Latent v_tgt = field.eval(z, t, cfg.target);
        SpatialMap mask = cfg.force_mask ? SpatialMap(z.h, z.w, *cfg.force_mask)
                                         : guidance_mask(v_tgt - v_src, cfg.mask_mode);
        Latent stepped = add_scaled(z, t_prev - t, v_tgt);
        z = mask_blend(mask, stepped, inv.states[static_cast<std::size_t>(i) - 1]);
        if (!all_finite(z)) throw NumericError("baseline_latent_fusion: non-finite latent", i);
    }

    LatentFusionResult out;
    out.output = std::move(z);
    out.peak_cached_latents = inv.states.size();
    out.nfe = field.nfe() - nfe_before;
    return out;
}

}  // namespace flowinv
