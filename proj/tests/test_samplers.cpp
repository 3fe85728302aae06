#include <catch2/catch_amalgamated.hpp>

#include "flowinv/analytic.hpp"
#include "flowinv/rng.hpp"
#include "flowinv/sampler.hpp"

using namespace flowinv;

namespace {

// v(z,t,c) = fixed latent; the one-exact-Euler-step oracle.
class ConstField : public VelocityField {
public:
    explicit ConstField(Latent v) : value_(std::move(v)) {}

private:
    Latent do_eval(const Latent&, double, const Condition&) const override { return value_; }
    Latent value_;
};

}  // namespace

TEST_CASE("zero field gives a constant trajectory") {
    TimeOnlyField zero = TimeOnlyField::zero();
    StepRule rule(StepKind::Euler, zero, uniform_grid(6));
    Latent z(2, 3, 3, 0.7);
    Trajectory traj = sample(rule, z, Condition::null());
    REQUIRE(traj.states.size() == 7);
    for (const Latent& s : traj.states) REQUIRE(s == z);
}

TEST_CASE("constant field over one step is one exact Euler update") {
    Latent v(1, 1, 2, 0.0);
    v.v = {1.0, 0.0};
    ConstField field(v);
    StepRule rule(StepKind::Euler, field, TimeGrid({0.0, 1.0}));
    Latent z_end(1, 1, 2, 0.0);
    z_end.v = {3.0, 5.0};
    Trajectory traj = sample(rule, z_end, Condition::null());
    REQUIRE(traj.endpoint().v[0] == 2.0);  // z(0) = z(1) - v
    REQUIRE(traj.endpoint().v[1] == 5.0);
}

TEST_CASE("Euler endpoint converges to the analytic flow image (N = 512)") {
    AnalyticGaussianField field(0.0, 1.0);
    StepRule rule(StepKind::Euler, field, uniform_grid(512));
    Latent z_end(1, 1, 1, 1.0);
    Trajectory traj = sample(rule, z_end, Condition::null());
    // z(1) = z(0) for this field, so the exact endpoint is 1.0; the O(dt)
    // global Euler error was measured once at 2.5e-3.
    REQUIRE(std::fabs(traj.endpoint().v[0] - 1.0) < 5e-3);
}

TEST_CASE("trajectory timestamps follow the grid and direction tag") {
    AnalyticGaussianField field(0.0, 1.0);
    StepRule rule(StepKind::Euler, field, uniform_grid(4));
    Rng rng(3);
    Latent z = rng.normal_latent(1, 2, 2);

    Trajectory fwd = sample(rule, z, Condition::null());
    REQUIRE(fwd.tag == TrajectoryTag::Forward);
    REQUIRE(fwd.times.front() == 1.0);
    REQUIRE(fwd.times.back() == 0.0);

    Trajectory inv = vanilla_invert(rule, z, Condition::null(), VanillaMode::AtTarget);
    REQUIRE(inv.tag == TrajectoryTag::Inverse);
    REQUIRE(inv.times.front() == 0.0);
    REQUIRE(inv.times.back() == 1.0);
    REQUIRE(inv.states.size() == 5);
    REQUIRE(inv.directions.size() == 4);
}

TEST_CASE("replaying cached directions through the step inverse recovers the start", "[property]") {
    AnalyticGaussianField field(0.2, 1.4);
    for (StepKind kind : {StepKind::Euler, StepKind::Heun}) {
        StepRule rule(kind, field, uniform_grid(16));
        Rng rng(17);
        Latent z_end = rng.normal_latent(2, 2, 2);
        Trajectory traj = sample(rule, z_end, Condition::null());
        // walk back up using the SAME cached directions
        Latent z = traj.endpoint();
        for (int i = 1; i <= rule.intervals(); ++i)
            z = rule.invert_step(z, i, traj.directions[static_cast<std::size_t>(rule.intervals() - i)]);
        REQUIRE(max_abs_diff(z, z_end) < 1e-12);
    }
}

TEST_CASE("sample NFE is N for Euler and 2N for Heun") {
    AnalyticGaussianField field(0.0, 1.0);
    Latent z(1, 2, 2, 0.5);
    for (int n : {4, 9}) {
        StepRule euler(StepKind::Euler, field, uniform_grid(n));
        field.reset_nfe();
        sample(euler, z, Condition::null());
        REQUIRE(field.nfe() == static_cast<std::uint64_t>(n));

        StepRule heun(StepKind::Heun, field, uniform_grid(n));
        field.reset_nfe();
        sample(heun, z, Condition::null());
        REQUIRE(field.nfe() == static_cast<std::uint64_t>(2 * n));
    }
}

TEST_CASE("vanilla AT_TARGET inverts a time-only field exactly") {
    TimeOnlyField field([](double t) { return std::sin(3.0 * t) + 0.5; },
                        [](double t) { return -std::cos(3.0 * t) / 3.0 + 0.5 * t; });
    StepRule rule(StepKind::Euler, field, uniform_grid(12));
    Latent z0(1, 2, 2, 1.25);
    Trajectory inv = vanilla_invert(rule, z0, Condition::null(), VanillaMode::AtTarget);
    Trajectory rec = sample(rule, inv.endpoint(), Condition::null());
    REQUIRE(max_abs_diff(rec.endpoint(), z0) < 1e-12);
}

TEST_CASE("zero field inversion is the identity in both modes") {
    TimeOnlyField zero = TimeOnlyField::zero();
    StepRule rule(StepKind::Euler, zero, uniform_grid(5));
    Latent z0(1, 2, 2, -0.4);
    for (VanillaMode mode : {VanillaMode::AtPrev, VanillaMode::AtTarget}) {
        Trajectory inv = vanilla_invert(rule, z0, Condition::null(), mode);
        for (const Latent& s : inv.states) REQUIRE(s == z0);
    }
}

TEST_CASE("AT_PREV roundtrip error exceeds AT_TARGET on the analytic field") {
    AnalyticGaussianField field(0.0, 1.0);
    StepRule rule(StepKind::Euler, field, uniform_grid(32));
    double acc_prev = 0.0, acc_target = 0.0;
    for (int s = 0; s < 100; ++s) {
        Rng rng(1000 + s);
        Latent z0 = rng.normal_latent(1, 2, 2);
        acc_prev += roundtrip_error(rule, z0, Condition::null(), vanilla_inverter(VanillaMode::AtPrev));
        acc_target += roundtrip_error(rule, z0, Condition::null(), vanilla_inverter(VanillaMode::AtTarget));
    }
    REQUIRE(acc_prev > acc_target);
}

TEST_CASE("exact inverter on a time-only field has ~zero roundtrip MSE") {
    TimeOnlyField field([](double t) { return t * t; }, [](double t) { return t * t * t / 3.0; });
    StepRule rule(StepKind::Euler, field, uniform_grid(20));
    Latent z0(2, 2, 2, 0.9);
    double err = roundtrip_error(rule, z0, Condition::null(), vanilla_inverter(VanillaMode::AtTarget));
    REQUIRE(err <= 1e-24);
}

TEST_CASE("AT_PREV roundtrip MSE is first-order: doubling N shrinks it ~4x") {
    // Reference run (100 seeds, [1,2,2] latents): N=16 -> 2.126e-2,
    // N=32 -> 5.739e-3, ratio 3.70.
    AnalyticGaussianField field(0.0, 1.0);
    double acc16 = 0.0, acc32 = 0.0;
    StepRule r16(StepKind::Euler, field, uniform_grid(16));
    StepRule r32(StepKind::Euler, field, uniform_grid(32));
    for (int s = 0; s < 100; ++s) {
        Rng rng(1000 + s);
        Latent z0 = rng.normal_latent(1, 2, 2);
        acc16 += roundtrip_error(r16, z0, Condition::null(), vanilla_inverter(VanillaMode::AtPrev));
        Rng rng2(1000 + s);
        Latent z0b = rng2.normal_latent(1, 2, 2);
        acc32 += roundtrip_error(r32, z0b, Condition::null(), vanilla_inverter(VanillaMode::AtPrev));
    }
    double ratio = acc16 / acc32;
    REQUIRE(ratio > 3.0);
    REQUIRE(ratio < 4.5);
}

TEST_CASE("non-finite latents are reported with the step index") {
    // A field that blows up turns into a NumericError carrying the interval.
    class BlowUpField : public VelocityField {
        Latent do_eval(const Latent& z, double t, const Condition&) const override {
            Latent out = z;
            for (double& x : out.v) x = t < 0.5 ? 1e308 * 1e10 : 0.1;
            return out;
        }
    };
    BlowUpField field;
    StepRule rule(StepKind::Euler, field, uniform_grid(4));
    Latent z(1, 1, 1, 0.0);
    try {
        sample(rule, z, Condition::null());
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(e.step_index == 1);  // first interval evaluated below t = 0.5
    }
}
