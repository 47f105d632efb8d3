#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "arflow/bench.hpp"

using namespace arflow;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("flop counters obey the scaling identities") {
    const int64_t C = 16, d = 32, h = 4;

    SUBCASE("hybrid is exactly linear in T") {
        for (int64_t t : {int64_t(64), int64_t(256), int64_t(1024)}) {
            CHECK(flops_hybrid(2 * t, C, d, h) == 2 * flops_hybrid(t, C, d, h));
            CHECK(flops_hybrid(4 * t, C, d, h) == 4 * flops_hybrid(t, C, d, h));
        }
    }
    SUBCASE("softmax's quadratic term quadruples when T doubles") {
        // total(2T) - 2*total(T) cancels every linear term and leaves
        // 4q - 2q = 2q, where q = quadratic(T).
        const int64_t t = 128;
        const int64_t dev =
            flops_softmax_full(2 * t, d, h) - 2 * flops_softmax_full(t, d, h);
        const int64_t quad_t = 2 * h * 2 * t * t * d;
        CHECK(dev == 2 * quad_t);
    }
    SUBCASE("counters match their closed forms term by term") {
        const int64_t t = 256;
        const int64_t hidden = h * d;
        const int64_t n = t / C;
        CHECK(flops_hybrid(t, C, d, h) ==
              2 * 4 * t * hidden * hidden + 2 * t * hidden * h +
                  2 * h * n * (2 * C * C * d + 2 * C * d * d));
        CHECK(flops_softmax_full(t, d, h) ==
              2 * 4 * t * hidden * hidden + 2 * h * 2 * t * t * d);
        CHECK(flops_linear_causal(t, d, h) ==
              2 * 4 * t * hidden * hidden +
                  2 * h * (2 * t * t * d + t * t));
    }
    SUBCASE("hybrid beats softmax asymptotically in the counters") {
        CHECK(flops_hybrid(16384, 64, 64, 1) <
              flops_softmax_full(16384, 64, 1));
    }
}

TEST_CASE("peak memory counters separate quadratic from linear mechanisms") {
    const int64_t C = 64, d = 64, h = 1;
    const int64_t t1 = 1024, t2 = 2048;

    // Softmax peak grows ~4x when T doubles; hybrid ~2x.
    const double soft_ratio =
        double(peak_live_elements(Mechanism::softmax_full, t2, C, d, h)) /
        double(peak_live_elements(Mechanism::softmax_full, t1, C, d, h));
    const double hyb_ratio =
        double(peak_live_elements(Mechanism::hybrid, t2, C, d, h)) /
        double(peak_live_elements(Mechanism::hybrid, t1, C, d, h));
    CHECK(soft_ratio > 3.0);
    CHECK(hyb_ratio < 2.5);
    CHECK(peak_live_elements(Mechanism::softmax_full, 16384, C, d, h) >
          20 * peak_live_elements(Mechanism::hybrid, 16384, C, d, h));
}

TEST_CASE("power-law fits recover exponents") {
    SUBCASE("exact power law") {
        std::vector<double> x, y;
        for (double t : {256.0, 512.0, 1024.0, 2048.0}) {
            x.push_back(t);
            y.push_back(3.5 * std::pow(t, 1.75));
        }
        auto f = fit_power_law(x, y);
        CHECK(f.slope == doctest::Approx(1.75).epsilon(1e-6));
        CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(std::exp(f.intercept) == doctest::Approx(3.5).epsilon(1e-6));
    }
    SUBCASE("constant data has slope zero") {
        std::vector<double> x{1.0, 2.0, 4.0, 8.0};
        std::vector<double> y{5.0, 5.0, 5.0, 5.0};
        auto f = fit_power_law(x, y);
        CHECK(f.slope == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(f.r2 == 1.0);
    }
    SUBCASE("contracts") {
        CHECK_THROWS_AS(fit_power_law({1.0}, {1.0}), Error);
        CHECK_THROWS_AS(fit_power_law({1.0, 2.0}, {1.0}), Error);
        CHECK_THROWS_AS(fit_power_law({1.0, -2.0}, {1.0, 1.0}), Error);
        CHECK_THROWS_AS(fit_power_law({2.0, 2.0}, {1.0, 1.0}), Error);
    }
}

TEST_CASE("small sweeps produce sane points") {
    const std::vector<int64_t> ts{32, 64, 128};
    auto pts = sweep(Mechanism::hybrid, ts, 8, 8, 2, 5);
    REQUIRE(pts.size() == 3);
    for (size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].median_ns > 0.0);
        CHECK(pts[i].tokens == ts[i]);
        CHECK(pts[i].flops ==
              flops_hybrid(ts[i], 8, 8, 2));
        CHECK(pts[i].chunk == 8);
        CHECK(pts[i].head_dim == 8);
        CHECK(pts[i].heads == 2);
    }

    SUBCASE("every mechanism runs") {
        auto soft = sweep(Mechanism::softmax_full, {32, 64}, 8, 8, 2, 5);
        auto lin = sweep(Mechanism::linear_causal, {32, 64}, 8, 8, 2, 5);
        CHECK(soft[0].median_ns > 0.0);
        CHECK(lin[0].median_ns > 0.0);
        CHECK(soft[1].flops == flops_softmax_full(64, 8, 2));
        CHECK(lin[1].flops == flops_linear_causal(64, 8, 2));
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(sweep(Mechanism::hybrid, {}, 8, 8, 2, 5), Error);
        CHECK_THROWS_AS(sweep(Mechanism::hybrid, {33}, 8, 8, 2, 5), Error);
        CHECK_THROWS_AS(sweep(Mechanism::hybrid, {64, 32}, 8, 8, 2, 5), Error);
        CHECK_THROWS_AS(sweep(Mechanism::hybrid, {32, 64}, 8, 8, 2, 3), Error);
    }
}

TEST_CASE("bench csv carries one row per point") {
    auto pts = sweep(Mechanism::linear_causal, {16, 32}, 8, 4, 1, 5);
    const std::string p = temp_path("arfbench_test.csv");
    write_bench_csv(p, pts);

    std::ifstream in(p);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "mechanism,T,C,d,heads,median_ns,flops");
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        CHECK(line.substr(0, 14) == "linear_causal,");
    }
    CHECK(rows == 2);
    std::remove(p.c_str());
}

TEST_CASE("medians are timing-monotone across a modest range") {
    // Work quadruples per step here, so even noisy timers should keep the
    // ordering; equality is allowed to stay robust on loaded machines.
    auto pts = sweep(Mechanism::softmax_full, {64, 256, 1024}, 16, 16, 1, 5);
    CHECK(pts[0].median_ns <= pts[1].median_ns);
    CHECK(pts[1].median_ns <= pts[2].median_ns);
}
