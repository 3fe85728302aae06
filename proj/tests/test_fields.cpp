#include <catch2/catch_amalgamated.hpp>

#include "flowinv/analytic.hpp"
#include "flowinv/field.hpp"
#include "flowinv/rng.hpp"
#include "oracles.hpp"

using namespace flowinv;

TEST_CASE("analytic_velocity closed-form special points") {
    Latent z(1, 1, 1, 2.0);

    // t = 0.5 with sigma0 = 1: the numerator factor 2t - 1 vanishes
    Latent v_mid = analytic_velocity(Latent(1, 1, 1, 123.456), 0.5, 0.0, 1.0);
    REQUIRE(v_mid.v[0] == Catch::Approx(0.0).margin(1e-15));

    // t = 1: latent is pure noise Z_1 and E[Z_0] = 0, so v = z
    Latent v_one = analytic_velocity(z, 1.0, 0.0, 1.0);
    REQUIRE(v_one.v[0] == Catch::Approx(2.0));

    // t = 0: latent is data Z_0 and E[Z_1] = 0, so v = -z
    Latent v_zero = analytic_velocity(Latent(1, 1, 1, 1.0), 0.0, 0.0, 1.0);
    REQUIRE(v_zero.v[0] == Catch::Approx(-1.0));
}

TEST_CASE("analytic_velocity rejects non-positive sigma0") {
    REQUIRE_THROWS_AS(analytic_velocity(Latent(1, 1, 1), 0.5, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("analytic_flow_map endpoints and midpoint for the standard field") {
    Latent one(1, 1, 1, 1.0);
    REQUIRE(analytic_flow_map(one, 1.0, 0.0, 1.0).v[0] == Catch::Approx(1.0));
    REQUIRE(analytic_flow_map(one, 0.5, 0.0, 1.0).v[0] == Catch::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("analytic_flow_map matches an adaptive integrator", "[oracle]") {
    struct Case {
        double z0, t, mu0, sigma0;
    };
    const Case cases[] = {
        {1.0, 0.5, 0.0, 1.0}, {1.0, 0.5, 0.0, 2.0}, {1.0, 1.0, 0.0, 2.0},
        {-0.7, 0.8, 0.5, 0.6}, {2.3, 0.3, -1.0, 1.5},
    };
    for (const Case& c : cases) {
        auto f = [&](double z, double t) { return analytic_velocity_scalar(z, t, c.mu0, c.sigma0); };
        double integrated = oracle::rkf45(f, c.z0, 0.0, c.t, 1e-13);
        double closed = analytic_flow_map_scalar(c.z0, c.t, c.mu0, c.sigma0);
        INFO("z0=" << c.z0 << " t=" << c.t << " mu0=" << c.mu0 << " sigma0=" << c.sigma0);
        REQUIRE(closed == Catch::Approx(integrated).margin(1e-10));
    }
}

TEST_CASE("flow map inverse recovers the start point to 1e-9", "[oracle]") {
    AnalyticGaussianField field(0.3, 1.7);
    Rng rng(5);
    Latent z0 = rng.normal_latent(2, 3, 3);
    Latent z1 = field.flow_map(z0, 1.0);
    // integrate the ODE backward from t = 1 with the adaptive oracle
    for (std::size_t i = 0; i < z0.size(); ++i) {
        auto f = [&](double z, double t) { return analytic_velocity_scalar(z, t, 0.3, 1.7); };
        double back = oracle::rkf45(f, z1.v[i], 1.0, 0.0, 1e-13);
        REQUIRE(back == Catch::Approx(z0.v[i]).margin(1e-9));
    }
    // and the closed-form inverse agrees
    Latent back_closed = field.flow_map_inverse(z1, 1.0);
    REQUIRE(max_abs_diff(back_closed, z0) < 1e-12);
}

TEST_CASE("analytic_velocity matches binned Monte-Carlo conditional means", "[oracle][slowish]") {
    // E[Z_1 - Z_0 | Z_t near z*]: the conditional mean is linear in z, so
    // comparing at the bin's empirical mean removes binning bias.
    const double mu0 = 0.4, sigma0 = 1.3;
    Rng rng(2024);
    const int n = 1000000;
    for (double t : {0.1, 0.5, 0.9}) {
        double zstar = analytic_flow_map_scalar(mu0 + 0.8 * sigma0, t, mu0, sigma0);  // a likely spot
        double width = 0.05;
        double sum_v = 0.0, sum_v2 = 0.0, sum_z = 0.0;
        long count = 0;
        for (int i = 0; i < n; ++i) {
            double x0 = mu0 + sigma0 * rng.next_normal();
            double x1 = rng.next_normal();
            double zt = t * x1 + (1.0 - t) * x0;
            if (std::fabs(zt - zstar) > width) continue;
            double v = x1 - x0;
            sum_v += v;
            sum_v2 += v * v;
            sum_z += zt;
            ++count;
        }
        REQUIRE(count > 1000);
        double mc_mean = sum_v / count;
        double mc_sd = std::sqrt(std::max(0.0, sum_v2 / count - mc_mean * mc_mean));
        double se = mc_sd / std::sqrt(static_cast<double>(count));
        double predicted = analytic_velocity_scalar(sum_z / count, t, mu0, sigma0);
        INFO("t=" << t << " count=" << count << " mc=" << mc_mean << " pred=" << predicted << " se=" << se);
        REQUIRE(std::fabs(predicted - mc_mean) < 3.0 * se);
    }
}

TEST_CASE("ddim_analytic_eps closed form") {
    Latent z(1, 1, 1, 1.0);
    // alpha_bar = 1: no noise mixed in
    REQUIRE(ddim_analytic_eps(z, 0, 2.0, {1.0, 0.5}).v[0] == 0.0);
    // sigma0 = 1: denominator collapses to 1
    for (double ab : {0.9, 0.5, 0.2}) {
        Latent e = ddim_analytic_eps(z, 1, 1.0, {1.0, ab});
        REQUIRE(e.v[0] == Catch::Approx(std::sqrt(1.0 - ab)));
    }
    REQUIRE_THROWS_AS(ddim_analytic_eps(z, 5, 1.0, {1.0, 0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(ddim_analytic_eps(z, 0, 1.0, {0.0, 0.5}), std::invalid_argument);
}

TEST_CASE("ddim_analytic_eps matches binned Monte-Carlo conditional mean", "[oracle][slowish]") {
    // sigma0 = 2, alpha_bar = 0.5, z = 1; sample (Z_0, eps), bin on Z_k.
    const double sigma0 = 2.0, ab = 0.5;
    double expected = ddim_eps_scalar(1.0, ab, sigma0);
    Rng rng(77);
    const int n = 1000000;
    double width = 0.05, sum_e = 0.0, sum_e2 = 0.0, sum_z = 0.0;
    long count = 0;
    for (int i = 0; i < n; ++i) {
        double x0 = sigma0 * rng.next_normal();
        double eps = rng.next_normal();
        double zk = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
        if (std::fabs(zk - 1.0) > width) continue;
        sum_e += eps;
        sum_e2 += eps * eps;
        sum_z += zk;
        ++count;
    }
    REQUIRE(count > 1000);
    double mc = sum_e / count;
    double sd = std::sqrt(std::max(0.0, sum_e2 / count - mc * mc));
    double se = sd / std::sqrt(static_cast<double>(count));
    double predicted = ddim_eps_scalar(sum_z / count, ab, sigma0);  // linear in z
    INFO("expected(z=1)=" << expected << " mc=" << mc << " se=" << se);
    REQUIRE(std::fabs(predicted - mc) < 3.0 * se);
}

TEST_CASE("cosine schedule is in (0,1], starts at 1, strictly decreasing") {
    REQUIRE(cosine_alpha_bar(0.0) == 1.0);
    double prev = 1.0;
    for (int k = 1; k <= 100; ++k) {
        double ab = cosine_alpha_bar(k / 100.0);
        REQUIRE(ab > 0.0);
        REQUIRE(ab < prev);
        prev = ab;
    }
}

TEST_CASE("ConditionalAnalyticField dispatches by token and rejects unknowns") {
    ConditionalAnalyticField field;
    field.set(Condition::of(0), -1.0, 1.0);
    field.set(Condition::of(1), 1.0, 1.0);
    Latent z(1, 1, 1, 0.5);
    Latent v0 = field.eval(z, 0.3, Condition::of(0));
    Latent v1 = field.eval(z, 0.3, Condition::of(1));
    REQUIRE(v0.v[0] != v1.v[0]);
    REQUIRE_THROWS_AS(field.eval(z, 0.3, Condition::of(7)), std::invalid_argument);
    REQUIRE_THROWS_AS(field.eval(z, 0.3, Condition::null()), std::invalid_argument);
}

TEST_CASE("NFE counter increments once per eval and resets") {
    AnalyticGaussianField field(0.0, 1.0);
    Latent z(1, 2, 2, 0.3);
    REQUIRE(field.nfe() == 0);
    for (int i = 0; i < 5; ++i) field.eval(z, 0.5);
    REQUIRE(field.nfe() == 5);
    field.reset_nfe();
    REQUIRE(field.nfe() == 0);
}

TEST_CASE("TimeOnlyField ignores latent and condition") {
    TimeOnlyField field([](double t) { return 2.0 * t; }, [](double t) { return t * t; });
    Latent a(1, 1, 1, 5.0), b(1, 1, 1, -3.0);
    REQUIRE(field.eval(a, 0.25).v[0] == 0.5);
    REQUIRE(field.eval(b, 0.25, Condition::of(3)).v[0] == 0.5);
    REQUIRE(field.flow_map(a, 1.0).v[0] == Catch::Approx(6.0));  // 5 + (1 - 0)
}
