#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flowinv/sampler.hpp"
#include "flowinv/stats.hpp"
#include "flowinv/step_rule.hpp"

namespace flowinv {

// Predictor-corrector inversion. Per step i = 1..N:
//   Correction:    Zbar_{t_i} = invert_step(Zhat_{t_{i-1}}, i, vhat_{i-1})
//   Prediction:    vhat_i     = direction(Zbar_{t_i}, t_i, c)
//   Sample update: Zhat_{t_i} = invert_step(Zhat_{t_{i-1}}, i, vhat_i)
// seeded by vhat_0 = direction(Z_0, t_0, c). Costs one direction call per
// step plus the initial one: N + 1 for Euler, doubled for Heun.
inline Trajectory uni_inv(const StepRule& rule, const Latent& z0, const Condition& c) {
    Trajectory traj;
    traj.tag = TrajectoryTag::Inverse;
    int n = rule.intervals();
    Latent z = z0;
    Latent v_hat = rule.direction(z0, 0, 1, c);
    traj.times.push_back(rule.grid()[0]);
    traj.states.push_back(z);
    for (int i = 1; i <= n; ++i) {
        Latent z_bar = rule.invert_step(z, i, v_hat);
        v_hat = rule.direction(z_bar, i, i, c);
        z = rule.invert_step(z, i, v_hat);
        if (!all_finite(z)) throw NumericError("uni_inv: non-finite latent", i);
        traj.directions.push_back(v_hat);
        traj.times.push_back(rule.grid()[i]);
        traj.states.push_back(z);
    }
    return traj;
}

inline Inverter uni_inv_inverter() {
    return [](const StepRule& rule, const Latent& z0, const Condition& c) { return uni_inv(rule, z0, c); };
}

enum class OneStepMethod { UniInv, VanillaAtPrev, VanillaAtTarget };

struct LocalErrorStudy {
    std::vector<double> dts;
    std::vector<double> errors;
    double slope = std::numeric_limits<double>::quiet_NaN();
    bool exact = false;  // errors at machine noise; slope fit skipped
};

// One-step error against the discrete forward step, isolating the local
// order: take the exact Z_{t_i} from the field's flow map, apply one forward
// step of the rule to get Z_{t_{i-1}}, then invert that single step. Uni-Inv
// is seeded with the direction at (Z_{t_{i-1}}, t_{i-1}), the second-order
// case of the error expansion, so one isolated step realizes the full
// O(dt^3) order.
inline LocalErrorStudy local_error_study(StepKind kind, const ExactFlowField& field, const Latent& z_start,
                                         const std::vector<double>& dts, OneStepMethod method,
                                         double t_i = 0.75, const Condition& c = Condition::null()) {
    if (kind == StepKind::Ddim)
        throw std::invalid_argument("local_error_study: flow-map oracle covers Euler/Heun only");
    if (dts.size() < 3) throw std::invalid_argument("local_error_study: need at least 3 dt points");
    double dt_min = *std::min_element(dts.begin(), dts.end());
    double dt_max = *std::max_element(dts.begin(), dts.end());
    if (!(dt_min > 0.0) || dt_max / dt_min < 16.0 - 1e-9)
        throw std::invalid_argument("local_error_study: dt values must span >= 4 octaves");
    if (!(t_i > dt_max) || t_i > 1.0)
        throw std::invalid_argument("local_error_study: need 0 < t_i - dt for all dt");

    LocalErrorStudy study;
    double scale = 0.0;
    for (double dt : dts) {
        double t_prev = t_i - dt;
        std::vector<double> times;
        int iv;  // interval of interest
        if (t_prev < 1e-15) {
            times = {0.0, t_i};
            iv = 1;
        } else {
            times = {0.0, t_prev, t_i};
            iv = 2;
        }
        StepRule rule(kind, field, TimeGrid(std::move(times)));

        Latent z_ti = field.flow_map(z_start, t_i);
        Latent z_prev = rule.forward_step(z_ti, iv, c);

        Latent z_hat(z_ti.c, z_ti.h, z_ti.w);
        switch (method) {
            case OneStepMethod::UniInv: {
                Latent v_seed = rule.direction(z_prev, iv - 1, iv, c);
                Latent z_bar = rule.invert_step(z_prev, iv, v_seed);
                Latent v_hat = rule.direction(z_bar, iv, iv, c);
                z_hat = rule.invert_step(z_prev, iv, v_hat);
                break;
            }
            case OneStepMethod::VanillaAtPrev:
                z_hat = rule.invert_step(z_prev, iv, rule.direction(z_prev, iv - 1, iv, c));
                break;
            case OneStepMethod::VanillaAtTarget:
                z_hat = rule.invert_step(z_prev, iv, rule.direction(z_prev, iv, iv, c));
                break;
        }
        study.dts.push_back(dt);
        study.errors.push_back(l2_norm(z_hat - z_ti));
        scale = std::max(scale, l2_norm(z_ti));
    }

    double max_err = *std::max_element(study.errors.begin(), study.errors.end());
    if (max_err <= 1e-12 * (1.0 + scale)) {
        study.exact = true;
        return study;
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < study.dts.size(); ++i) {
        lx.push_back(std::log(study.dts[i]));
        ly.push_back(std::log(std::max(study.errors[i], 1e-300)));
    }
    study.slope = fit_line(lx, ly).slope;
    return study;
}

struct Reconstruction {
    Latent output;
    double mse_val = 0.0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    std::uint64_t nfe = 0;
};

// Full inversion then resampling from the endpoint noise only; no
// intermediate latents are reused.
inline Reconstruction reconstruct_with(const StepRule& rule, const Latent& z0, const Condition& c,
                                       const Inverter& inverter, bool with_ssim = true) {
    std::uint64_t before = rule.field().nfe();
    Trajectory inv = inverter(rule, z0, c);
    Trajectory rec = sample(rule, inv.endpoint(), c);
    Reconstruction out;
    out.output = rec.endpoint();
    out.nfe = rule.field().nfe() - before;
    out.mse_val = mse(z0, out.output);
    out.psnr_db = psnr_from_mse(out.mse_val);
    out.ssim_val = with_ssim && z0.h >= 8 && z0.w >= 8 ? ssim(z0, out.output) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

inline Reconstruction reconstruct(const StepRule& rule, const Latent& z0, const Condition& c) {
    return reconstruct_with(rule, z0, c, uni_inv_inverter());
}

}  // namespace flowinv
