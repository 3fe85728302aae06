#pragma once

#include <functional>
#include <vector>

#include "flowinv/metrics.hpp"
#include "flowinv/step_rule.hpp"
#include "flowinv/tensor.hpp"

namespace flowinv {

enum class TrajectoryTag { Forward, Inverse };

// States in iteration order together with the direction used for each step,
// so the algebraic per-step inverse can be replayed exactly.
struct Trajectory {
    TrajectoryTag tag = TrajectoryTag::Forward;
    std::vector<double> times;
    std::vector<Latent> states;
    std::vector<Latent> directions;

    const Latent& endpoint() const { return states.back(); }
    const Latent& start() const { return states.front(); }
};

// Forward (denoising) sampling from the latent at the grid's last time down
// to t_0, recording every state.
inline Trajectory sample(const StepRule& rule, const Latent& z_end, const Condition& c) {
    Trajectory traj;
    traj.tag = TrajectoryTag::Forward;
    int n = rule.intervals();
    Latent z = z_end;
    traj.times.push_back(rule.grid()[n]);
    traj.states.push_back(z);
    for (int i = n; i >= 1; --i) {
        Latent d = rule.direction(z, i, i, c);
        z = rule.apply_step(z, i, d);
        if (!all_finite(z)) throw NumericError("sample: non-finite latent", i);
        traj.directions.push_back(std::move(d));
        traj.times.push_back(rule.grid()[i - 1]);
        traj.states.push_back(z);
    }
    return traj;
}

enum class VanillaMode { AtPrev, AtTarget };

// The two vanilla inversion baselines. Both apply the exact algebraic step
// inverse but approximate the unknown direction at the step target:
// AtPrev evaluates at (Z_{t_{i-1}}, t_{i-1}) (DDIM-Inversion style), AtTarget
// at (Z_{t_{i-1}}, t_i).
inline Trajectory vanilla_invert(const StepRule& rule, const Latent& z0, const Condition& c, VanillaMode mode) {
    Trajectory traj;
    traj.tag = TrajectoryTag::Inverse;
    int n = rule.intervals();
    Latent z = z0;
    traj.times.push_back(rule.grid()[0]);
    traj.states.push_back(z);
    for (int i = 1; i <= n; ++i) {
        int k = mode == VanillaMode::AtPrev ? i - 1 : i;
        Latent d = rule.direction(z, k, i, c);
        z = rule.invert_step(z, i, d);
        if (!all_finite(z)) throw NumericError("vanilla_invert: non-finite latent", i);
        traj.directions.push_back(std::move(d));
        traj.times.push_back(rule.grid()[i]);
        traj.states.push_back(z);
    }
    return traj;
}

using Inverter = std::function<Trajectory(const StepRule&, const Latent&, const Condition&)>;

inline Inverter vanilla_inverter(VanillaMode mode) {
    return [mode](const StepRule& rule, const Latent& z0, const Condition& c) {
        return vanilla_invert(rule, z0, c, mode);
    };
}

// Invert z0 to the grid end, sample back with the same rule and condition
// using only the endpoint noise, and return MSE(z0, reconstruction).
inline double roundtrip_error(const StepRule& rule, const Latent& z0, const Condition& c, const Inverter& inverter) {
    Trajectory inv = inverter(rule, z0, c);
    Trajectory rec = sample(rule, inv.endpoint(), c);
    return mse(z0, rec.endpoint());
}

}  // namespace flowinv
