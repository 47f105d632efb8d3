#include "arflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "arflow/error.hpp"
#include "arflow/io.hpp"

namespace arflow {

namespace {

template <typename T>
void check_set(const std::vector<Tensor<T>>& x, const char* who,
               size_t min_points) {
    ARF_CHECK(x.size() >= min_points, ErrorKind::contract,
              who << " needs at least " << min_points << " points, got "
                  << x.size());
    for (const auto& t : x)
        ARF_CHECK(t.size() == x[0].size(), ErrorKind::dimension,
                  who << " mixes element counts " << x[0].size() << " and "
                      << t.size());
}

template <typename T>
double sq_dist(const Tensor<T>& a, const Tensor<T>& b) {
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d =
            static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s;
}

} // namespace

template <typename T>
double median_pairwise_distance(const std::vector<Tensor<T>>& x,
                                const std::vector<Tensor<T>>& y) {
    check_set(x, "median_pairwise_distance: first set", 1);
    check_set(y, "median_pairwise_distance: second set", 1);
    ARF_CHECK(x[0].size() == y[0].size(), ErrorKind::dimension,
              "median_pairwise_distance: sets have different dimensions");

    std::vector<const Tensor<T>*> pooled;
    for (const auto& t : x) pooled.push_back(&t);
    for (const auto& t : y) pooled.push_back(&t);

    std::vector<double> d2;
    d2.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j)
            d2.push_back(sq_dist(*pooled[i], *pooled[j]));
    ARF_CHECK(!d2.empty(), ErrorKind::contract,
              "median_pairwise_distance: need at least two pooled points");

    const size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<ptrdiff_t>(mid),
                     d2.end());
    const double med = std::sqrt(d2[mid]);
    return med > 0.0 ? med : 1.0;
}

template <typename T>
double mmd2_rbf(const std::vector<Tensor<T>>& x,
                const std::vector<Tensor<T>>& y, double bandwidth) {
    check_set(x, "mmd2_rbf: first set", 2);
    check_set(y, "mmd2_rbf: second set", 2);
    ARF_CHECK(x[0].size() == y[0].size(), ErrorKind::dimension,
              "mmd2_rbf: sets have different dimensions");

    const double h =
        bandwidth > 0.0 ? bandwidth : median_pairwise_distance(x, y);
    const double gamma = 1.0 / (2.0 * h * h);
    auto k = [&](const Tensor<T>& a, const Tensor<T>& b) {
        return std::exp(-gamma * sq_dist(a, b));
    };

    const double m = static_cast<double>(x.size());
    const double n = static_cast<double>(y.size());
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < x.size(); ++j)
            if (i != j) kxx += k(x[i], x[j]);
    for (size_t i = 0; i < y.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j)
            if (i != j) kyy += k(y[i], y[j]);
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j) kxy += k(x[i], y[j]);

    return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) -
           2.0 * kxy / (m * n);
}

namespace {

template <typename T>
std::vector<double> sample_mean(const std::vector<Tensor<T>>& x) {
    const int64_t dim = x[0].size();
    std::vector<double> mu(static_cast<size_t>(dim), 0.0);
    for (const auto& t : x)
        for (int64_t i = 0; i < dim; ++i)
            mu[static_cast<size_t>(i)] += static_cast<double>(t[i]);
    for (double& v : mu) v /= static_cast<double>(x.size());
    return mu;
}

template <typename T>
std::vector<double> sample_cov(const std::vector<Tensor<T>>& x,
                               const std::vector<double>& mu) {
    const size_t dim = mu.size();
    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> c(dim);
    for (const auto& t : x) {
        for (size_t i = 0; i < dim; ++i)
            c[i] = static_cast<double>(t[static_cast<int64_t>(i)]) - mu[i];
        for (size_t i = 0; i < dim; ++i)
            for (size_t j = 0; j < dim; ++j) cov[i * dim + j] += c[i] * c[j];
    }
    const double denom = static_cast<double>(x.size()) - 1.0;
    for (double& v : cov) v /= denom;
    return cov;
}

} // namespace

template <typename T>
double mean_error(const std::vector<Tensor<T>>& x,
                  const std::vector<Tensor<T>>& y) {
    check_set(x, "mean_error: first set", 1);
    check_set(y, "mean_error: second set", 1);
    ARF_CHECK(x[0].size() == y[0].size(), ErrorKind::dimension,
              "mean_error: sets have different dimensions");
    const auto mx = sample_mean(x);
    const auto my = sample_mean(y);
    double s = 0.0;
    for (size_t i = 0; i < mx.size(); ++i) {
        const double d = mx[i] - my[i];
        s += d * d;
    }
    return std::sqrt(s);
}

template <typename T>
double covariance_error(const std::vector<Tensor<T>>& x,
                        const std::vector<Tensor<T>>& y) {
    check_set(x, "covariance_error: first set", 2);
    check_set(y, "covariance_error: second set", 2);
    ARF_CHECK(x[0].size() == y[0].size(), ErrorKind::dimension,
              "covariance_error: sets have different dimensions");
    const auto cx = sample_cov(x, sample_mean(x));
    const auto cy = sample_cov(y, sample_mean(y));
    double s = 0.0;
    for (size_t i = 0; i < cx.size(); ++i) {
        const double d = cx[i] - cy[i];
        s += d * d;
    }
    return std::sqrt(s);
}

template <typename T>
EvalReport evaluate_samples(const std::vector<Tensor<T>>& samples,
                            const std::vector<Tensor<T>>& reference,
                            uint64_t seed) {
    EvalReport r;
    r.mmd2 = mmd2_rbf(samples, reference);
    r.mean_err = mean_error(samples, reference);
    r.cov_err = covariance_error(samples, reference);
    r.num_samples = static_cast<int64_t>(samples.size());
    r.seed = seed;
    return r;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ostringstream os;
    os << "mmd2,mean_err,cov_err,num_samples,seed\n";
    os << std::setprecision(10) << report.mmd2 << ',' << report.mean_err
       << ',' << report.cov_err << ',' << report.num_samples << ','
       << report.seed << '\n';
    const std::string s = os.str();
    io::atomic_save(path, std::vector<unsigned char>(s.begin(), s.end()));
}

#define ARFLOW_INSTANTIATE_EVAL(T)                                            \
    template double median_pairwise_distance(const std::vector<Tensor<T>>&,   \
                                             const std::vector<Tensor<T>>&);  \
    template double mmd2_rbf(const std::vector<Tensor<T>>&,                   \
                             const std::vector<Tensor<T>>&, double);          \
    template double mean_error(const std::vector<Tensor<T>>&,                 \
                               const std::vector<Tensor<T>>&);                \
    template double covariance_error(const std::vector<Tensor<T>>&,           \
                                     const std::vector<Tensor<T>>&);          \
    template EvalReport evaluate_samples(const std::vector<Tensor<T>>&,       \
                                         const std::vector<Tensor<T>>&,       \
                                         uint64_t);

ARFLOW_INSTANTIATE_EVAL(float)
ARFLOW_INSTANTIATE_EVAL(double)

#undef ARFLOW_INSTANTIATE_EVAL

} // namespace arflow
