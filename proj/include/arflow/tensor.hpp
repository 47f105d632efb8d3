#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "arflow/error.hpp"

namespace arflow {

// Dimension sizes, outermost first. Row-major layout throughout: the last
// dimension is contiguous.
using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        ARF_CHECK(d >= 0, ErrorKind::dimension, "negative dimension " << d);
        n *= d;
    }
    return n;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense row-major tensor. Copies share storage (cheap handles); clone()
// makes an independent buffer. All math lives in free functions (ops.hpp);
// the type itself only manages memory and indexing.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(
              static_cast<size_t>(numel(shape_)), T(0))) {}

    Tensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(std::move(values))) {
        ARF_CHECK(static_cast<int64_t>(data_->size()) == numel(shape_),
                  ErrorKind::dimension,
                  "value count " << data_->size() << " does not fill shape of "
                                 << numel(shape_) << " elements");
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        for (T& x : *t.data_) x = value;
        return t;
    }

    static Tensor scalar(T value) { return full(Shape{1}, value); }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }

    int64_t dim(int i) const {
        ARF_CHECK(i >= 0 && i < rank(), ErrorKind::dimension,
                  "dim index " << i << " out of range for rank " << rank());
        return shape_[static_cast<size_t>(i)];
    }

    int64_t size() const { return defined() ? static_cast<int64_t>(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }

    T& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // Row-major element access for the common ranks.
    T& at(int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    T& at(int64_t i, int64_t j) {
        return (*data_)[static_cast<size_t>(i * shape_[1] + j)];
    }
    T& at(int64_t i, int64_t j, int64_t k) {
        return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return (*data_)[static_cast<size_t>(
            ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
    const T& at(int64_t i, int64_t j) const {
        return (*data_)[static_cast<size_t>(i * shape_[1] + j)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return (*data_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return (*data_)[static_cast<size_t>(
            ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    Tensor clone() const {
        ARF_CHECK(defined(), ErrorKind::contract, "clone of undefined tensor");
        return Tensor(shape_, std::vector<T>(*data_));
    }

    // Same storage, new shape; element count must match.
    Tensor reshaped(Shape shape) const {
        ARF_CHECK(defined(), ErrorKind::contract, "reshape of undefined tensor");
        ARF_CHECK(numel(shape) == size(), ErrorKind::dimension,
                  "reshape from " << size() << " to " << numel(shape)
                                  << " elements");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    void fill(T value) {
        for (T& x : *data_) x = value;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

} // namespace arflow
