#pragma once

// Training-sequence construction: N same-class items, each corrupted with
// fresh noise at an independently drawn time, arranged so the noisiest
// chunk comes first. Also the synthetic class-conditioned datasets that
// stand in for encoded image latents, and their on-disk format.

#include <cstdint>
#include <string>
#include <vector>

#include "arflow/interpolant.hpp"
#include "arflow/rng.hpp"
#include "arflow/tensor.hpp"

namespace arflow {

template <typename T>
struct CategoryDataset {
    int64_t num_classes = 0;
    Shape latent_shape; // {channels, height, width}
    std::vector<std::vector<Tensor<T>>> items; // [class][item]

    int64_t items_in_class(int64_t k) const {
        return static_cast<int64_t>(items[static_cast<size_t>(k)].size());
    }
};

template <typename T>
struct TrainingSequence {
    int64_t class_id = 0;
    std::vector<InterpolantSample<T>> chunks; // noisiest first
    std::vector<FlowTime> times;              // same order as chunks
};

// Draws n items from the class with replacement and n i.i.d. uniform times,
// sorts the times descending (stable, so ties keep draw order), and corrupts
// item j with fresh noise at the j-th sorted time. Rng consumption order is
// part of the contract: n uniforms for the times, then per chunk one uniform
// for the item pick followed by the noise draws.
template <typename T>
TrainingSequence<T> build_sequence(const CategoryDataset<T>& ds,
                                   int64_t class_id, int64_t n, RngState& rng);

// Class k is N(mu_k, spread^2 I) with mu_k ~ N(0, I) drawn from a stream
// derived from rng's seed and k only, so datasets of different sizes built
// from the same seed share their class means.
template <typename T>
CategoryDataset<T> make_gaussian_mixture_dataset(int64_t num_classes,
                                                 int64_t items_per_class,
                                                 Shape latent_shape, T spread,
                                                 RngState& rng);

// Class k is a fixed orientation/frequency grating over the h x w grid plus
// i.i.d. Gaussian jitter; the base pattern is a closed form in k alone.
template <typename T>
CategoryDataset<T> make_pattern_image_dataset(int64_t num_classes,
                                              int64_t items_per_class,
                                              Shape latent_shape, T jitter,
                                              RngState& rng);

// The base patterns behind the two generators, exposed for evaluation code
// that needs reference means without materializing a dataset.
template <typename T>
Tensor<T> mixture_class_mean(int64_t class_id, const Shape& latent_shape,
                             const RngState& rng);
template <typename T>
Tensor<T> pattern_class_base(int64_t class_id, const Shape& latent_shape);

// File format "ARFDS1": magic, little-endian u32 header (num_classes,
// items_per_class, channels, height, width), then raw little-endian f32
// payload, class-major then item-major, row-major per latent. Requires a
// rectangular dataset (equal items per class).
template <typename T>
void save_dataset(const CategoryDataset<T>& ds, const std::string& path);

template <typename T>
CategoryDataset<T> load_dataset(const std::string& path);

} // namespace arflow
