#pragma once

// Sample-quality metrics for generated latents: an unbiased RBF-kernel
// MMD^2 two-sample statistic plus first/second-moment errors against a
// reference set. All statistics are accumulated in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "arflow/tensor.hpp"

namespace arflow {

// Median pairwise Euclidean distance over the pooled set (the classic
// bandwidth heuristic). Falls back to 1 when the median is zero (all
// points coincide).
template <typename T>
double median_pairwise_distance(const std::vector<Tensor<T>>& x,
                                const std::vector<Tensor<T>>& y);

// Unbiased MMD^2 estimate with kernel exp(-||a-b||^2 / (2 h^2)).
// bandwidth <= 0 selects the median heuristic over the pooled sets.
// Both sets need at least two points; the unbiased estimator can dip
// slightly below zero and is reported raw.
template <typename T>
double mmd2_rbf(const std::vector<Tensor<T>>& x,
                const std::vector<Tensor<T>>& y, double bandwidth = 0.0);

// L2 distance between the two sample means.
template <typename T>
double mean_error(const std::vector<Tensor<T>>& x,
                  const std::vector<Tensor<T>>& y);

// Frobenius distance between the two sample covariances (n-1 normalized).
template <typename T>
double covariance_error(const std::vector<Tensor<T>>& x,
                        const std::vector<Tensor<T>>& y);

struct EvalReport {
    double mmd2 = 0.0;
    double mean_err = 0.0;
    double cov_err = 0.0;
    int64_t num_samples = 0;
    uint64_t seed = 0;
};

template <typename T>
EvalReport evaluate_samples(const std::vector<Tensor<T>>& samples,
                            const std::vector<Tensor<T>>& reference,
                            uint64_t seed);

// Single-row CSV: mmd2,mean_err,cov_err,num_samples,seed. Atomic write.
void write_eval_csv(const std::string& path, const EvalReport& report);

} // namespace arflow
