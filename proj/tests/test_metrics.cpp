#include <catch2/catch_amalgamated.hpp>

#include "flowinv/dataset.hpp"
#include "flowinv/metrics.hpp"
#include "flowinv/rng.hpp"
#include "oracles.hpp"

using namespace flowinv;

TEST_CASE("mse basics") {
    Latent a(2, 3, 3, 0.5), b(2, 3, 3, 0.5);
    REQUIRE(mse(a, a) == 0.0);
    for (double& x : b.v) x += 0.1;
    REQUIRE(mse(a, b) == Catch::Approx(0.01).epsilon(1e-12));
    Latent c(2, 3, 4);
    REQUIRE_THROWS_AS(mse(a, c), std::invalid_argument);
}

TEST_CASE("mse agrees with an independent two-pass oracle", "[oracle]") {
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        Latent a = rng.normal_latent(3, 6, 5);
        Latent b = rng.normal_latent(3, 6, 5);
        double lib = mse(a, b);
        double ora = oracle::mse_two_pass(a, b);
        REQUIRE(lib == Catch::Approx(ora).epsilon(1e-12));
    }
}

TEST_CASE("psnr arithmetic and the zero-MSE cap") {
    Latent a(1, 2, 2, 0.0), b(1, 2, 2, 0.1);
    REQUIRE(psnr(a, b) == Catch::Approx(20.0).epsilon(1e-12));  // mse 0.01
    REQUIRE(psnr(a, a) == 99.0);
    Latent c(1, 2, 2, 1.0);
    REQUIRE(psnr(a, c) == Catch::Approx(0.0).margin(1e-12));  // mse 1
}

TEST_CASE("psnr strictly decreases as mse increases", "[property]") {
    double prev = psnr_from_mse(1e-8);
    for (double m : {1e-6, 1e-4, 1e-2, 0.5, 1.0, 4.0}) {
        double cur = psnr_from_mse(m);
        REQUIRE(cur < prev);
        prev = cur;
    }
}

TEST_CASE("ssim of an image with itself is 1") {
    Rng rng(9);
    Latent a = rng.normal_latent(3, 16, 16);
    REQUIRE(ssim(a, a) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim is symmetric and penalizes anti-correlated structure") {
    Rng rng(10);
    Latent a(1, 16, 16);
    for (double& x : a.v) x = rng.next_double() < 0.5 ? 0.0 : 1.0;  // binary image
    Latent inv(1, 16, 16);
    for (std::size_t i = 0; i < a.size(); ++i) inv.v[i] = 1.0 - a.v[i];
    double s = ssim(a, inv);
    REQUIRE(s < 0.0);
    REQUIRE(ssim(inv, a) == Catch::Approx(s).epsilon(1e-12));
}

TEST_CASE("ssim rejects images smaller than one window") {
    Latent tiny(1, 7, 12);
    REQUIRE_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim matches the naive scalar-loop oracle", "[oracle]") {
    // Pair of generated shapes images; agreement to 1e-9.
    auto samples = gen_shapes_dataset(2, 31);
    double lib = ssim(samples[0].image, samples[1].image);
    double ora = oracle::ssim_naive(samples[0].image, samples[1].image);
    REQUIRE(lib == Catch::Approx(ora).margin(1e-9));
    REQUIRE(lib > -1.0);
    REQUIRE(lib < 1.0);

    Rng rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        Latent a = rng.normal_latent(2, 24, 24);
        Latent b = rng.normal_latent(2, 24, 24);
        REQUIRE(ssim(a, b) == Catch::Approx(oracle::ssim_naive(a, b)).margin(1e-9));
    }
}

TEST_CASE("region_report on an identical pair") {
    auto samples = gen_shapes_dataset(1, 77);
    const ShapesSample& s = samples[0];
    RegionReport rep = region_report(s.image, s.image, s.region_mask, 0, 2);
    REQUIRE(rep.bg_mse == 0.0);
    REQUIRE(rep.bg_psnr == 99.0);
    REQUIRE(rep.bg_ssim == Catch::Approx(1.0).epsilon(1e-12));
    // the score measures the original's color balance between channels 2 and 0
    double inside_c2 = 0.0, inside_c0 = 0.0;
    long n = 0;
    for (int y = 0; y < s.image.h; ++y)
        for (int x = 0; x < s.image.w; ++x)
            if (s.region_mask.at(y, x) != 0.0) {
                inside_c2 += s.image.at(2, y, x);
                inside_c0 += s.image.at(0, y, x);
                ++n;
            }
    REQUIRE(rep.edit_score == Catch::Approx((inside_c2 - inside_c0) / n).margin(1e-12));
}

TEST_CASE("region_report detects a perfect recolor with untouched background") {
    auto samples = gen_shapes_dataset(3, 99);
    // recolor the region to a different channel, leave the background alone
    ShapesSample s = samples[0];
    int src = condition_color(s.token);
    int tgt = (src + 1) % 3;
    Latent edited = s.image;
    for (int y = 0; y < s.image.h; ++y)
        for (int x = 0; x < s.image.w; ++x)
            if (s.region_mask.at(y, x) != 0.0) {
                for (int ci = 0; ci < 3; ++ci) edited.at(ci, y, x) = ci == tgt ? 0.9 : 0.15;
            }
    RegionReport rep = region_report(s.image, edited, s.region_mask, src, tgt);
    REQUIRE(rep.bg_mse == 0.0);
    REQUIRE(rep.edit_score > 0.5);
}

TEST_CASE("region_report error paths") {
    Latent a(3, 24, 24, 0.5);
    SpatialMap all_ones(24, 24, 1.0);
    REQUIRE_THROWS_AS(region_report(a, a, all_ones, 0, 1), std::invalid_argument);  // empty background
    SpatialMap all_zero(24, 24, 0.0);
    REQUIRE_THROWS_AS(region_report(a, a, all_zero, 0, 1), std::invalid_argument);  // empty region
    SpatialMap ok(24, 24, 0.0);
    ok.at(5, 5) = 1.0;
    REQUIRE_THROWS_AS(region_report(a, a, ok, 0, 5), std::invalid_argument);  // bad channel
}

TEST_CASE("edit_score stays in [-1, 1]", "[property]") {
    Rng rng(13);
    SpatialMap mask(24, 24, 0.0);
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) mask.at(y, x) = 1.0;
    for (int rep = 0; rep < 10; ++rep) {
        Latent a = rng.normal_latent(3, 24, 24);
        Latent b = rng.normal_latent(3, 24, 24);
        for (double& x : b.v) x *= 5.0;  // exaggerate out-of-range values
        RegionReport r = region_report(a, b, mask, 0, 1);
        REQUIRE(r.edit_score >= -1.0);
        REQUIRE(r.edit_score <= 1.0);
    }
}
