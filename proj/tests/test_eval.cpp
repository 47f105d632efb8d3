#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "arflow/eval.hpp"
#include "arflow/ops.hpp"

using namespace arflow;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

template <typename T>
std::vector<Tensor<T>> gaussian_set(int n, const Shape& shape, double mean,
                                    double sd, RngState& rng) {
    std::vector<Tensor<T>> out;
    for (int i = 0; i < n; ++i) {
        Tensor<T> t = randn<T>(shape, rng);
        for (int64_t j = 0; j < t.size(); ++j)
            t[j] = static_cast<T>(mean + sd * static_cast<double>(t[j]));
        out.push_back(t);
    }
    return out;
}

// Brute-force recomputation of everything mmd2_rbf does, written against
// flat double vectors with its own loops.
double mmd2_oracle(const std::vector<std::vector<double>>& x,
                   const std::vector<std::vector<double>>& y,
                   double bandwidth) {
    auto d2 = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i)
            s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };
    double h = bandwidth;
    if (h <= 0.0) {
        std::vector<std::vector<double>> pooled = x;
        pooled.insert(pooled.end(), y.begin(), y.end());
        std::vector<double> dist2;
        for (size_t i = 0; i < pooled.size(); ++i)
            for (size_t j = i + 1; j < pooled.size(); ++j)
                dist2.push_back(d2(pooled[i], pooled[j]));
        std::sort(dist2.begin(), dist2.end());
        h = std::sqrt(dist2[dist2.size() / 2]); // upper median
        if (h <= 0.0) h = 1.0;
    }
    const double g = 1.0 / (2.0 * h * h);
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < x.size(); ++j)
            if (i != j) kxx += std::exp(-g * d2(x[i], x[j]));
    for (size_t i = 0; i < y.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j)
            if (i != j) kyy += std::exp(-g * d2(y[i], y[j]));
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j)
            kxy += std::exp(-g * d2(x[i], y[j]));
    const double m = double(x.size()), n = double(y.size());
    return kxx / (m * (m - 1)) + kyy / (n * (n - 1)) - 2.0 * kxy / (m * n);
}

std::vector<std::vector<double>> flatten(const std::vector<Tensor<double>>& x) {
    std::vector<std::vector<double>> out;
    for (const auto& t : x)
        out.emplace_back(t.data(), t.data() + t.size());
    return out;
}

} // namespace

TEST_CASE("mmd2 matches the double-loop oracle") {
    RngState rng(3);
    auto x = gaussian_set<double>(9, {2, 3}, 0.0, 1.0, rng);
    auto y = gaussian_set<double>(7, {2, 3}, 0.5, 1.2, rng);

    SUBCASE("with the median-heuristic bandwidth") {
        const double got = mmd2_rbf(x, y);
        const double want = mmd2_oracle(flatten(x), flatten(y), 0.0);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
    SUBCASE("with an explicit bandwidth") {
        const double got = mmd2_rbf(x, y, 0.7);
        const double want = mmd2_oracle(flatten(x), flatten(y), 0.7);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
    SUBCASE("float inputs agree with the double oracle loosely") {
        RngState rf(4);
        auto xf = gaussian_set<float>(8, {4}, 0.0, 1.0, rf);
        auto yf = gaussian_set<float>(8, {4}, 0.3, 1.0, rf);
        std::vector<std::vector<double>> xd, yd;
        for (const auto& t : xf)
            xd.emplace_back(t.data(), t.data() + t.size());
        for (const auto& t : yf)
            yd.emplace_back(t.data(), t.data() + t.size());
        CHECK(mmd2_rbf(xf, yf) ==
              doctest::Approx(mmd2_oracle(xd, yd, 0.0)).epsilon(1e-8));
    }
}

TEST_CASE("mmd2 separates distributions and vanishes on matched ones") {
    RngState rng(11);
    const Shape shape{8};

    SUBCASE("same distribution: estimate near zero (can be negative)") {
        auto x = gaussian_set<double>(128, shape, 0.0, 1.0, rng);
        auto y = gaussian_set<double>(128, shape, 0.0, 1.0, rng);
        const double v = mmd2_rbf(x, y);
        INFO("same-distribution mmd2 = " << v);
        CHECK(std::abs(v) < 0.02);
    }
    SUBCASE("five-sigma shift: large positive") {
        auto x = gaussian_set<double>(64, shape, 0.0, 1.0, rng);
        auto y = gaussian_set<double>(64, shape, 5.0, 1.0, rng);
        const double v = mmd2_rbf(x, y);
        INFO("shifted mmd2 = " << v);
        CHECK(v > 0.3);
    }
    SUBCASE("shift ordering: farther means bigger") {
        auto x = gaussian_set<double>(64, shape, 0.0, 1.0, rng);
        auto y1 = gaussian_set<double>(64, shape, 0.5, 1.0, rng);
        auto y2 = gaussian_set<double>(64, shape, 5.0, 1.0, rng);
        CHECK(mmd2_rbf(x, y2) > mmd2_rbf(x, y1));
    }
}

TEST_CASE("median bandwidth falls back to one on coincident points") {
    std::vector<Tensor<double>> x(3, Tensor<double>::full({2}, 1.5));
    std::vector<Tensor<double>> y(3, Tensor<double>::full({2}, 1.5));
    CHECK(median_pairwise_distance(x, y) == 1.0);
    // All kernels are exactly one, so every term cancels.
    CHECK(mmd2_rbf(x, y) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("moment errors have exact small-case values") {
    // Two two-point sets in the plane with hand-computable moments.
    std::vector<Tensor<double>> x{Tensor<double>({2}, {0.0, 0.0}),
                                  Tensor<double>({2}, {2.0, 2.0})};
    std::vector<Tensor<double>> y{Tensor<double>({2}, {1.0, 0.0}),
                                  Tensor<double>({2}, {3.0, 2.0})};
    // Means: (1,1) vs (2,1) -> error 1.
    CHECK(mean_error(x, y) == doctest::Approx(1.0).epsilon(1e-14));
    // Centered points are identical (+-(1,1)), so covariances match.
    CHECK(covariance_error(x, y) == doctest::Approx(0.0).epsilon(1e-14));

    SUBCASE("scaling one set is seen by the covariance only") {
        std::vector<Tensor<double>> z{Tensor<double>({2}, {-1.0, -1.0}),
                                      Tensor<double>({2}, {3.0, 3.0})};
        // Mean (1,1) as x, so only the second moment differs.
        CHECK(mean_error(x, z) == doctest::Approx(0.0).epsilon(1e-14));
        // cov(x) has all entries 2, cov(z) all entries 8 (n-1 = 1), so the
        // Frobenius distance is sqrt(4 * 6^2) = 12.
        CHECK(covariance_error(x, z) == doctest::Approx(12.0).epsilon(1e-12));
    }
    SUBCASE("identical sets give exactly zero errors") {
        CHECK(mean_error(x, x) == 0.0);
        CHECK(covariance_error(x, x) == 0.0);
    }
}

TEST_CASE("evaluation contracts") {
    RngState rng(21);
    auto x = gaussian_set<double>(4, {3}, 0.0, 1.0, rng);
    auto one = gaussian_set<double>(1, {3}, 0.0, 1.0, rng);
    auto other_dim = gaussian_set<double>(4, {5}, 0.0, 1.0, rng);

    CHECK_THROWS_AS(mmd2_rbf(x, one), Error);
    CHECK_THROWS_AS(mmd2_rbf(one, x), Error);
    CHECK_THROWS_AS(mmd2_rbf(x, other_dim), Error);
    CHECK_THROWS_AS(mean_error(x, other_dim), Error);
    CHECK_THROWS_AS(covariance_error(x, other_dim), Error);
    CHECK_THROWS_AS(mmd2_rbf(std::vector<Tensor<double>>{}, x), Error);
}

TEST_CASE("evaluation report and csv") {
    RngState rng(31);
    auto x = gaussian_set<double>(16, {4}, 0.0, 1.0, rng);
    auto y = gaussian_set<double>(16, {4}, 1.0, 1.0, rng);
    EvalReport r = evaluate_samples(x, y, 99);
    CHECK(r.num_samples == 16);
    CHECK(r.seed == 99);
    CHECK(r.mean_err > 0.5);
    CHECK(r.mmd2 == doctest::Approx(mmd2_rbf(x, y)).epsilon(1e-14));

    const std::string p = temp_path("arfeval_test.csv");
    write_eval_csv(p, r);
    std::ifstream in(p);
    REQUIRE(in.good());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "mmd2,mean_err,cov_err,num_samples,seed");
    CHECK(row.find(",16,99") != std::string::npos);
    std::remove(p.c_str());
}
