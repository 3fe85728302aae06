#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "flowinv/analytic.hpp"
#include "flowinv/field.hpp"
#include "flowinv/tensor.hpp"
#include "flowinv/time_grid.hpp"

namespace flowinv {

enum class StepKind { Euler, Heun, Ddim };

// Appendix-style printed Heun nests the velocity as the sample argument of
// the second evaluation; kept behind a flag for inspection only.
enum class HeunForm { Standard, AsPrinted };

// One-step update abstraction: the forward (denoising) step over grid
// interval i (from t_i down to t_{i-1}) is
//     Z_{t_{i-1}} = a_i * Z_{t_i} + b_i * direction(Z_{t_i}, t_i, c),
// with a_i != 0 so every step has an algebraic inverse. Euler and Heun have
// a = 1, b = t_{i-1} - t_i; DDIM uses its noise-schedule coefficients and an
// eps-predictor as the direction.
class StepRule {
public:
    StepRule(StepKind kind, const VelocityField& field, TimeGrid grid,
             std::vector<double> alpha_bar = {}, HeunForm heun_form = HeunForm::Standard)
        : kind_(kind), field_(&field), grid_(std::move(grid)), alpha_bar_(std::move(alpha_bar)),
          heun_form_(heun_form) {
        int n = grid_.intervals();
        a_.resize(static_cast<std::size_t>(n) + 1);
        b_.resize(static_cast<std::size_t>(n) + 1);
        if (kind_ == StepKind::Ddim) {
            if (alpha_bar_.empty()) alpha_bar_ = cosine_schedule(grid_.times());
            if (static_cast<int>(alpha_bar_.size()) != grid_.size())
                throw std::invalid_argument("StepRule: schedule size must match grid");
            for (std::size_t k = 0; k < alpha_bar_.size(); ++k) {
                if (!(alpha_bar_[k] > 0.0) || alpha_bar_[k] > 1.0)
                    throw std::invalid_argument("StepRule: alpha_bar must be in (0,1]");
                if (k > 0 && alpha_bar_[k] > alpha_bar_[k - 1])
                    throw std::invalid_argument("StepRule: alpha_bar must be non-increasing along the grid");
            }
            for (int i = 1; i <= n; ++i) {
                double ab_prev = alpha_bar_[static_cast<std::size_t>(i) - 1];
                double ab_cur = alpha_bar_[static_cast<std::size_t>(i)];
                double ai = std::sqrt(ab_prev / ab_cur);
                a_[static_cast<std::size_t>(i)] = ai;
                b_[static_cast<std::size_t>(i)] = std::sqrt(1.0 - ab_prev) - ai * std::sqrt(1.0 - ab_cur);
            }
        } else {
            if (!alpha_bar_.empty()) throw std::invalid_argument("StepRule: schedule only applies to DDIM");
            for (int i = 1; i <= n; ++i) {
                a_[static_cast<std::size_t>(i)] = 1.0;
                b_[static_cast<std::size_t>(i)] = grid_[i - 1] - grid_[i];
            }
        }
    }

    StepKind kind() const { return kind_; }
    const VelocityField& field() const { return *field_; }
    const TimeGrid& grid() const { return grid_; }
    int intervals() const { return grid_.intervals(); }
    const std::vector<double>& alpha_bar() const { return alpha_bar_; }

    double a(int i) const { return a_[static_cast<std::size_t>(i)]; }
    double b(int i) const { return b_[static_cast<std::size_t>(i)]; }

    // Direction estimate evaluated at grid time index k, for use in interval
    // i. Heun needs the interval because its second slope sits one step width
    // away from the evaluation time.
    Latent direction(const Latent& z, int time_index, int interval, const Condition& c) const {
        double t = grid_[time_index];
        switch (kind_) {
            case StepKind::Euler:
            case StepKind::Ddim:
                return field_->eval(z, t, c);
            case StepKind::Heun: {
                double h = grid_[interval - 1] - grid_[interval];
                Latent v1 = field_->eval(z, t, c);
                if (heun_form_ == HeunForm::AsPrinted) {
                    Latent v2 = field_->eval(v1, t, c);
                    return 0.5 * (v1 + v2);
                }
                Latent v2 = field_->eval(add_scaled(z, h, v1), t + h, c);
                return 0.5 * (v1 + v2);
            }
        }
        throw std::logic_error("StepRule: unknown kind");
    }

    // a_i * z + b_i * d, with the a = 1 case kept as a plain add so identity
    // algebra stays bit-exact.
    Latent apply_step(const Latent& z, int interval, const Latent& d) const {
        double ai = a(interval), bi = b(interval);
        if (ai == 1.0) return add_scaled(z, bi, d);
        return affine(ai, z, bi, d);
    }

    // (z_prev - b_i * d) / a_i; exact inverse of apply_step for the same d.
    Latent invert_step(const Latent& z_prev, int interval, const Latent& d) const {
        double ai = a(interval), bi = b(interval);
        if (ai == 1.0) return add_scaled(z_prev, -bi, d);
        Latent out = z_prev;
        for (std::size_t e = 0; e < out.v.size(); ++e) out.v[e] = (z_prev.v[e] - bi * d.v[e]) / ai;
        return out;
    }

    Latent forward_step(const Latent& z, int interval, const Condition& c) const {
        return apply_step(z, interval, direction(z, interval, interval, c));
    }

private:
    StepKind kind_;
    const VelocityField* field_;
    TimeGrid grid_;
    std::vector<double> alpha_bar_;
    HeunForm heun_form_;
    std::vector<double> a_, b_;
};

inline StepRule make_step_rule(StepKind kind, const VelocityField& field, TimeGrid grid,
                               std::vector<double> schedule = {}, HeunForm heun_form = HeunForm::Standard) {
    return StepRule(kind, field, std::move(grid), std::move(schedule), heun_form);
}

}  // namespace flowinv
