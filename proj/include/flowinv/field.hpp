#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>

#include "flowinv/tensor.hpp"

namespace flowinv {

// Conditioning token; empty = unconditional (NULL text analogue).
struct Condition {
    std::optional<int> token;

    static Condition null() { return Condition{}; }
    static Condition of(int tok) { return Condition{tok}; }
    bool is_null() const { return !token.has_value(); }

    bool operator==(const Condition& o) const { return token == o.token; }
};

// Evaluatable velocity map (latent, time, condition) -> velocity, with NFE
// accounting. eval() is deterministic and side-effect-free apart from the
// counter; the counter is atomic so concurrent eval stays exact.
class VelocityField {
public:
    VelocityField() = default;
    virtual ~VelocityField() = default;

    // The atomic counter pins the default special members; copies and moves
    // carry the current count over.
    VelocityField(const VelocityField& o) : nfe_(o.nfe()) {}
    VelocityField& operator=(const VelocityField& o) {
        nfe_.store(o.nfe(), std::memory_order_relaxed);
        return *this;
    }

    Latent eval(const Latent& z, double t, const Condition& c = Condition::null()) const {
        nfe_.fetch_add(1, std::memory_order_relaxed);
        return do_eval(z, t, c);
    }

    std::uint64_t nfe() const { return nfe_.load(std::memory_order_relaxed); }
    void reset_nfe() const { nfe_.store(0, std::memory_order_relaxed); }

private:
    virtual Latent do_eval(const Latent& z, double t, const Condition& c) const = 0;
    mutable std::atomic<std::uint64_t> nfe_{0};
};

// Field that also knows the exact solution of its own ODE from t = 0; the
// oracle interface the convergence studies integrate against.
class ExactFlowField : public VelocityField {
public:
    virtual Latent flow_map(const Latent& z0, double t) const = 0;
};

// v(z,t,c) = f(t) everywhere; z- and c-independent. Inverting it is
// algebraically exact, which makes it the exactness oracle for Uni-Inv.
class TimeOnlyField : public ExactFlowField {
public:
    // f and its antiderivative F (for the exact flow z0 + F(t) - F(0)).
    TimeOnlyField(std::function<double(double)> f, std::function<double(double)> antiderivative)
        : f_(std::move(f)), antiderivative_(std::move(antiderivative)) {}

    static TimeOnlyField zero() {
        return TimeOnlyField([](double) { return 0.0; }, [](double) { return 0.0; });
    }

    Latent flow_map(const Latent& z0, double t) const override {
        double shift = antiderivative_(t) - antiderivative_(0.0);
        Latent out = z0;
        for (double& x : out.v) x += shift;
        return out;
    }

private:
    Latent do_eval(const Latent& z, double t, const Condition&) const override {
        return Latent(z.c, z.h, z.w, f_(t));
    }

    std::function<double(double)> f_;
    std::function<double(double)> antiderivative_;
};

}  // namespace flowinv
