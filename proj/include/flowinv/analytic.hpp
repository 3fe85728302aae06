#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "flowinv/field.hpp"
#include "flowinv/tensor.hpp"

namespace flowinv {

// Marginal velocity E[Z_1 - Z_0 | Z_t = z] of the linear interpolant
// Z_t = t*Z_1 + (1-t)*Z_0 with data Z_0 ~ N(mu0, sigma0^2) and noise
// Z_1 ~ N(0, 1). The denominator t^2 + (1-t)^2 sigma0^2 is strictly
// positive for sigma0 > 0, for every real t.
inline double analytic_velocity_scalar(double z, double t, double mu0, double sigma0) {
    double s2 = sigma0 * sigma0;
    double denom = t * t + (1.0 - t) * (1.0 - t) * s2;
    return (t - (1.0 - t) * s2) * (z - (1.0 - t) * mu0) / denom - mu0;
}

inline Latent analytic_velocity(const Latent& z, double t, double mu0, double sigma0) {
    if (!(sigma0 > 0.0)) throw std::invalid_argument("analytic_velocity: sigma0 must be > 0");
    Latent out = z;
    for (double& x : out.v) x = analytic_velocity_scalar(x, t, mu0, sigma0);
    return out;
}

// Exact solution at time t of dz/dt = analytic_velocity starting from z0 at
// t = 0: the flow transports Gaussian quantiles,
//   z(t) = (1-t)*mu0 + sqrt(t^2 + (1-t)^2 sigma0^2) * (z0 - mu0) / sigma0.
inline double analytic_flow_map_scalar(double z0, double t, double mu0, double sigma0) {
    double s = std::sqrt(t * t + (1.0 - t) * (1.0 - t) * sigma0 * sigma0);
    return (1.0 - t) * mu0 + s * (z0 - mu0) / sigma0;
}

inline Latent analytic_flow_map(const Latent& z0, double t, double mu0, double sigma0) {
    if (!(sigma0 > 0.0)) throw std::invalid_argument("analytic_flow_map: sigma0 must be > 0");
    Latent out = z0;
    for (double& x : out.v) x = analytic_flow_map_scalar(x, t, mu0, sigma0);
    return out;
}

// Inverse of the flow map: the t=0 point whose trajectory passes through zt
// at time t.
inline double analytic_flow_map_inverse_scalar(double zt, double t, double mu0, double sigma0) {
    double s = std::sqrt(t * t + (1.0 - t) * (1.0 - t) * sigma0 * sigma0);
    return mu0 + sigma0 * (zt - (1.0 - t) * mu0) / s;
}

// Exact-oracle velocity field for per-channel Gaussian data. mu0 may be a
// single value broadcast over channels or one value per channel.
class AnalyticGaussianField : public ExactFlowField {
public:
    AnalyticGaussianField(double mu0, double sigma0) : mu0_{mu0}, sigma0_(sigma0) { check(); }
    AnalyticGaussianField(std::vector<double> mu0_per_channel, double sigma0)
        : mu0_(std::move(mu0_per_channel)), sigma0_(sigma0) {
        check();
    }

    double sigma0() const { return sigma0_; }
    double mu0(int channel) const { return mu0_[mu0_.size() == 1 ? 0 : static_cast<std::size_t>(channel)]; }

    Latent flow_map(const Latent& z0, double t) const override {
        Latent out = z0;
        apply(out, [&](double x, double mu) { return analytic_flow_map_scalar(x, t, mu, sigma0_); });
        return out;
    }

    Latent flow_map_inverse(const Latent& zt, double t) const {
        Latent out = zt;
        apply(out, [&](double x, double mu) { return analytic_flow_map_inverse_scalar(x, t, mu, sigma0_); });
        return out;
    }

private:
    Latent do_eval(const Latent& z, double t, const Condition&) const override {
        Latent out = z;
        apply(out, [&](double x, double mu) { return analytic_velocity_scalar(x, t, mu, sigma0_); });
        return out;
    }

    template <class F>
    void apply(Latent& z, F&& f) const {
        std::size_t plane = static_cast<std::size_t>(z.h) * z.w;
        for (int ci = 0; ci < z.c; ++ci) {
            double mu = mu0(ci);
            for (std::size_t p = 0; p < plane; ++p) {
                std::size_t i = ci * plane + p;
                z.v[i] = f(z.v[i], mu);
            }
        }
    }

    void check() const {
        if (mu0_.empty()) throw std::invalid_argument("AnalyticGaussianField: mu0 empty");
        if (!(sigma0_ > 0.0)) throw std::invalid_argument("AnalyticGaussianField: sigma0 must be > 0");
    }

    std::vector<double> mu0_;
    double sigma0_;
};

// Exact-oracle stand-in for a conditional model: one Gaussian field per
// condition token. Evaluating an undeclared token is an error.
class ConditionalAnalyticField : public VelocityField {
public:
    struct Params {
        double mu0, sigma0;
    };

    void set(const Condition& c, double mu0, double sigma0) {
        if (!(sigma0 > 0.0)) throw std::invalid_argument("ConditionalAnalyticField: sigma0 must be > 0");
        table_[key(c)] = Params{mu0, sigma0};
    }

    const Params& params(const Condition& c) const {
        auto it = table_.find(key(c));
        if (it == table_.end()) throw std::invalid_argument("ConditionalAnalyticField: unknown condition token");
        return it->second;
    }

    Latent flow_map(const Latent& z0, double t, const Condition& c) const {
        const Params& p = params(c);
        return analytic_flow_map(z0, t, p.mu0, p.sigma0);
    }

    Latent flow_map_inverse(const Latent& zt, double t, const Condition& c) const {
        const Params& p = params(c);
        Latent out = zt;
        for (double& x : out.v) x = analytic_flow_map_inverse_scalar(x, t, p.mu0, p.sigma0);
        return out;
    }

private:
    Latent do_eval(const Latent& z, double t, const Condition& c) const override {
        const Params& p = params(c);
        Latent out = z;
        for (double& x : out.v) x = analytic_velocity_scalar(x, t, p.mu0, p.sigma0);
        return out;
    }

    static int key(const Condition& c) { return c.is_null() ? -1 : *c.token; }
    std::map<int, Params> table_;
};

// --- DDIM pieces -------------------------------------------------------------

// Smooth cosine noise schedule mapped onto flow time: alpha_bar(0) = 1 at the
// data end, strictly decreasing, and still positive at t = 1 thanks to the
// 0.008 offset.
inline double cosine_alpha_bar(double t) {
    double c = std::cos(1.5707963267948966 * t / 1.008);
    return c * c;
}

inline std::vector<double> cosine_schedule(const std::vector<double>& times) {
    std::vector<double> ab(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) ab[k] = cosine_alpha_bar(times[k]);
    return ab;
}

// E[eps | Z_k = z] for the DDIM forward process Z_k = sqrt(ab)*Z_0 +
// sqrt(1-ab)*eps with Gaussian data Z_0 ~ N(0, sigma0^2):
//   sqrt(1-ab) * z / (ab*sigma0^2 + 1 - ab).
inline double ddim_eps_scalar(double z, double alpha_bar, double sigma0) {
    if (!(alpha_bar > 0.0) || alpha_bar > 1.0)
        throw std::invalid_argument("ddim_eps_scalar: alpha_bar must be in (0,1]");
    double s2 = sigma0 * sigma0;
    return std::sqrt(1.0 - alpha_bar) * z / (alpha_bar * s2 + 1.0 - alpha_bar);
}

inline Latent ddim_analytic_eps(const Latent& z, int k, double sigma0, const std::vector<double>& alpha_bar) {
    if (k < 0 || static_cast<std::size_t>(k) >= alpha_bar.size())
        throw std::invalid_argument("ddim_analytic_eps: grid index out of range");
    double ab = alpha_bar[static_cast<std::size_t>(k)];
    Latent out = z;
    for (double& x : out.v) x = ddim_eps_scalar(x, ab, sigma0);
    return out;
}

// The analytic eps-predictor packaged as a field: eval(z, t, c) returns
// E[eps | z] under the schedule function, so a DDIM StepRule can drive it
// exactly like a velocity model. Time enters only through alpha_bar(t).
class AnalyticEpsField : public VelocityField {
public:
    explicit AnalyticEpsField(double sigma0) : sigma0_(sigma0) {
        if (!(sigma0 > 0.0)) throw std::invalid_argument("AnalyticEpsField: sigma0 must be > 0");
    }

    double sigma0() const { return sigma0_; }

private:
    Latent do_eval(const Latent& z, double t, const Condition&) const override {
        double ab = cosine_alpha_bar(t);
        Latent out = z;
        for (double& x : out.v) x = ddim_eps_scalar(x, ab, sigma0_);
        return out;
    }

    double sigma0_;
};

}  // namespace flowinv
