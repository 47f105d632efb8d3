#include "arflow/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "arflow/io.hpp"
#include "arflow/ops.hpp"

namespace arflow {

namespace {

constexpr uint64_t kMixtureMeanTag = 0x6D69787475726531ull; // per-class offset added

void check_latent_shape(const Shape& s) {
    ARF_CHECK(s.size() == 3, ErrorKind::dimension,
              "latent shape must be {channels, height, width}, got rank "
                  << s.size());
    ARF_CHECK(s[0] > 0 && s[1] > 0 && s[2] > 0, ErrorKind::dimension,
              "latent dims must be positive");
}

} // namespace

template <typename T>
TrainingSequence<T> build_sequence(const CategoryDataset<T>& ds,
                                   int64_t class_id, int64_t n,
                                   RngState& rng) {
    ARF_CHECK(class_id >= 0 && class_id < ds.num_classes, ErrorKind::contract,
              "class " << class_id << " outside 0.." << ds.num_classes - 1);
    ARF_CHECK(n >= 1, ErrorKind::contract, "sequence length " << n << " < 1");
    const auto& pool = ds.items[static_cast<size_t>(class_id)];
    ARF_CHECK(!pool.empty(), ErrorKind::contract,
              "class " << class_id << " has no items");

    // n i.i.d. uniform times, then noisiest-first ordering. Stable sort so
    // exact ties keep their draw order.
    std::vector<double> times(static_cast<size_t>(n));
    for (auto& t : times) t = rng.next_uniform();
    std::stable_sort(times.begin(), times.end(), std::greater<double>());

    TrainingSequence<T> seq;
    seq.class_id = class_id;
    seq.chunks.reserve(static_cast<size_t>(n));
    seq.times.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        // with-replacement item pick
        auto pick = static_cast<size_t>(rng.next_uniform() *
                                        static_cast<double>(pool.size()));
        if (pick >= pool.size()) pick = pool.size() - 1;
        Tensor<T> eps = randn<T>(pool[pick].shape(), rng);
        const FlowTime ft(times[static_cast<size_t>(i)]);
        seq.chunks.push_back(corrupt(pool[pick], eps, ft));
        seq.times.push_back(ft);
    }
    return seq;
}

template <typename T>
Tensor<T> mixture_class_mean(int64_t class_id, const Shape& latent_shape,
                             const RngState& rng) {
    check_latent_shape(latent_shape);
    // Means depend on the seed and class only, never on how far rng has
    // advanced, so datasets of any size share their class geometry.
    RngState mean_rng =
        rng.fork(kMixtureMeanTag + static_cast<uint64_t>(class_id));
    return randn<T>(latent_shape, mean_rng);
}

template <typename T>
CategoryDataset<T> make_gaussian_mixture_dataset(int64_t num_classes,
                                                 int64_t items_per_class,
                                                 Shape latent_shape, T spread,
                                                 RngState& rng) {
    ARF_CHECK(num_classes >= 1 && items_per_class >= 1, ErrorKind::contract,
              "dataset needs positive class and item counts");
    check_latent_shape(latent_shape);
    ARF_CHECK(spread >= T(0), ErrorKind::contract, "negative spread");

    CategoryDataset<T> ds;
    ds.num_classes = num_classes;
    ds.latent_shape = latent_shape;
    ds.items.resize(static_cast<size_t>(num_classes));
    for (int64_t k = 0; k < num_classes; ++k) {
        Tensor<T> mu = mixture_class_mean<T>(k, latent_shape, rng);
        auto& bucket = ds.items[static_cast<size_t>(k)];
        bucket.reserve(static_cast<size_t>(items_per_class));
        for (int64_t i = 0; i < items_per_class; ++i) {
            Tensor<T> item = randn<T>(latent_shape, rng);
            kern::active<T>().scale(item.data(), spread, item.data(),
                                    item.size());
            kern::active<T>().axpy(T(1), mu.data(), item.data(), item.size());
            bucket.push_back(std::move(item));
        }
    }
    return ds;
}

template <typename T>
Tensor<T> pattern_class_base(int64_t class_id, const Shape& latent_shape) {
    check_latent_shape(latent_shape);
    const int64_t c = latent_shape[0], h = latent_shape[1], w = latent_shape[2];
    // Orientation walks the golden angle so classes never coincide; spatial
    // frequency cycles a small set. Closed form in the class id alone.
    const double theta = 2.399963229728653 * static_cast<double>(class_id);
    const double freq = 1.0 + static_cast<double>(class_id % 4);
    const double cx = std::cos(theta), sx = std::sin(theta);
    Tensor<T> base(latent_shape);
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double u =
                    (static_cast<double>(x) * cx + static_cast<double>(y) * sx) /
                    static_cast<double>(w);
                const double phase =
                    1.5707963267948966 * static_cast<double>(ch);
                base.at(ch, y, x) = static_cast<T>(
                    std::sin(6.283185307179586 * freq * u + phase));
            }
    return base;
}

template <typename T>
CategoryDataset<T> make_pattern_image_dataset(int64_t num_classes,
                                              int64_t items_per_class,
                                              Shape latent_shape, T jitter,
                                              RngState& rng) {
    ARF_CHECK(num_classes >= 1 && items_per_class >= 1, ErrorKind::contract,
              "dataset needs positive class and item counts");
    check_latent_shape(latent_shape);
    ARF_CHECK(jitter >= T(0), ErrorKind::contract, "negative jitter");

    CategoryDataset<T> ds;
    ds.num_classes = num_classes;
    ds.latent_shape = latent_shape;
    ds.items.resize(static_cast<size_t>(num_classes));
    for (int64_t k = 0; k < num_classes; ++k) {
        Tensor<T> base = pattern_class_base<T>(k, latent_shape);
        auto& bucket = ds.items[static_cast<size_t>(k)];
        bucket.reserve(static_cast<size_t>(items_per_class));
        for (int64_t i = 0; i < items_per_class; ++i) {
            Tensor<T> item = randn<T>(latent_shape, rng);
            kern::active<T>().scale(item.data(), jitter, item.data(),
                                    item.size());
            kern::active<T>().axpy(T(1), base.data(), item.data(),
                                   item.size());
            bucket.push_back(std::move(item));
        }
    }
    return ds;
}

template <typename T>
void save_dataset(const CategoryDataset<T>& ds, const std::string& path) {
    ARF_CHECK(ds.num_classes >= 1 &&
                  ds.items.size() == static_cast<size_t>(ds.num_classes),
              ErrorKind::contract, "dataset class table inconsistent");
    check_latent_shape(ds.latent_shape);
    // Zero items per class is legal: the file is then header-only, which is
    // how an empty sample set round-trips.
    const size_t per_class = ds.items[0].size();
    for (const auto& bucket : ds.items)
        ARF_CHECK(bucket.size() == per_class, ErrorKind::contract,
                  "file format needs equal items per class; got "
                      << bucket.size() << " vs " << per_class);

    io::Writer w;
    w.str("ARFDS1");
    w.u32(static_cast<uint32_t>(ds.num_classes));
    w.u32(static_cast<uint32_t>(per_class));
    w.u32(static_cast<uint32_t>(ds.latent_shape[0]));
    w.u32(static_cast<uint32_t>(ds.latent_shape[1]));
    w.u32(static_cast<uint32_t>(ds.latent_shape[2]));
    for (const auto& bucket : ds.items)
        for (const auto& item : bucket) {
            ARF_CHECK(same_shape(item.shape(), ds.latent_shape),
                      ErrorKind::contract, "item shape differs from header");
            for (int64_t i = 0; i < item.size(); ++i)
                w.f32(static_cast<float>(item[i]));
        }
    io::atomic_save(path, w.buffer());
}

template <typename T>
CategoryDataset<T> load_dataset(const std::string& path) {
    const auto buf = io::slurp(path);
    io::Reader r(buf.data(), buf.size());
    ARF_CHECK(r.str(6) == "ARFDS1", ErrorKind::format,
              path << ": bad magic, not a dataset file");
    const uint32_t num_classes = r.u32();
    const uint32_t per_class = r.u32();
    const uint32_t c = r.u32(), h = r.u32(), w = r.u32();
    ARF_CHECK(num_classes >= 1 && c >= 1 && h >= 1 && w >= 1,
              ErrorKind::format, path << ": zero extent in header");
    const uint64_t want =
        static_cast<uint64_t>(num_classes) * per_class * c * h * w * 4ull;
    ARF_CHECK(r.remaining() == want, ErrorKind::format,
              path << ": payload holds " << r.remaining() << " bytes, header"
                   << " implies " << want);

    CategoryDataset<T> ds;
    ds.num_classes = num_classes;
    ds.latent_shape = Shape{static_cast<int64_t>(c), static_cast<int64_t>(h),
                            static_cast<int64_t>(w)};
    ds.items.resize(num_classes);
    for (uint32_t k = 0; k < num_classes; ++k) {
        auto& bucket = ds.items[k];
        bucket.reserve(per_class);
        for (uint32_t i = 0; i < per_class; ++i) {
            Tensor<T> item(ds.latent_shape);
            for (int64_t e = 0; e < item.size(); ++e)
                item[e] = static_cast<T>(r.f32());
            bucket.push_back(std::move(item));
        }
    }
    return ds;
}

#define ARFLOW_INSTANTIATE_SEQUENCE(T)                                        \
    template TrainingSequence<T> build_sequence(const CategoryDataset<T>&,    \
                                                int64_t, int64_t, RngState&); \
    template Tensor<T> mixture_class_mean<T>(int64_t, const Shape&,           \
                                             const RngState&);                \
    template CategoryDataset<T> make_gaussian_mixture_dataset(                \
        int64_t, int64_t, Shape, T, RngState&);                               \
    template Tensor<T> pattern_class_base<T>(int64_t, const Shape&);          \
    template CategoryDataset<T> make_pattern_image_dataset(int64_t, int64_t,  \
                                                           Shape, T,          \
                                                           RngState&);        \
    template void save_dataset(const CategoryDataset<T>&,                     \
                               const std::string&);                           \
    template CategoryDataset<T> load_dataset<T>(const std::string&);

ARFLOW_INSTANTIATE_SEQUENCE(float)
ARFLOW_INSTANTIATE_SEQUENCE(double)

#undef ARFLOW_INSTANTIATE_SEQUENCE

} // namespace arflow
