#include "arflow/kernels.hpp"

#include <cmath>

namespace arflow::kern {
namespace {

template <typename T>
void prescale(T* c, int64_t n, T beta) {
    if (beta == T(0)) {
        for (int64_t i = 0; i < n; ++i) c[i] = T(0);
    } else if (beta != T(1)) {
        for (int64_t i = 0; i < n; ++i) c[i] *= beta;
    }
}

template <typename T>
void matmul_ref(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
                bool ta, bool tb, T beta) {
    prescale(c, m * n, beta);
    if (!tb) {
        // op(b) row l is contiguous; stream it for both NN and TN.
        for (int64_t l = 0; l < k; ++l) {
            const T* brow = b + l * n;
            for (int64_t i = 0; i < m; ++i) {
                T av = ta ? a[l * m + i] : a[i * k + l];
                T* crow = c + i * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!ta) {
        // c[i][j] += dot(a row i, b row j)
        for (int64_t i = 0; i < m; ++i) {
            const T* arow = a + i * k;
            for (int64_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T s = T(0);
                for (int64_t l = 0; l < k; ++l) s += arow[l] * brow[l];
                c[i * n + j] += s;
            }
        }
    } else {
        // aT * bT; both operands strided, rarely used.
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                T s = T(0);
                for (int64_t l = 0; l < k; ++l) s += a[l * m + i] * b[j * k + l];
                c[i * n + j] += s;
            }
    }
}

template <typename T>
void add_ref(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_ref(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_ref(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_ref(const T* a, T alpha, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * alpha;
}

template <typename T>
void mul_acc_ref(const T* a, const T* b, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <typename T>
T sum_ref(const T* a, int64_t n) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += a[i];
    return s;
}

template <typename T>
T dot_ref(const T* a, const T* b, int64_t n) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
T sumsq_diff_ref(const T* a, const T* b, int64_t n) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) {
        T d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

template <typename T>
void vexp_ref(const T* a, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}

template <typename T>
void vsigmoid_ref(const T* a, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-a[i]));
}

template <typename T>
void vsilu_ref(const T* a, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] / (T(1) + std::exp(-a[i]));
}

template <typename T>
Funcs<T> make_ref_table() {
    Funcs<T> f;
    f.matmul = &matmul_ref<T>;
    f.add = &add_ref<T>;
    f.sub = &sub_ref<T>;
    f.mul = &mul_ref<T>;
    f.axpy = &axpy_ref<T>;
    f.scale = &scale_ref<T>;
    f.mul_acc = &mul_acc_ref<T>;
    f.sum = &sum_ref<T>;
    f.dot = &dot_ref<T>;
    f.sumsq_diff = &sumsq_diff_ref<T>;
    f.vexp = &vexp_ref<T>;
    f.vsigmoid = &vsigmoid_ref<T>;
    f.vsilu = &vsilu_ref<T>;
    return f;
}

} // namespace

template <>
const Funcs<float>& reference<float>() {
    static const Funcs<float> t = make_ref_table<float>();
    return t;
}

template <>
const Funcs<double>& reference<double>() {
    static const Funcs<double> t = make_ref_table<double>();
    return t;
}

} // namespace arflow::kern
