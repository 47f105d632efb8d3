#pragma once

#include <cstdint>

// Low-level arithmetic kernels. Every routine exists as a portable scalar
// reference; on x86 an AVX2+FMA variant is selected at process start when
// the CPU supports it. The two variants are equivalence-tested against each
// other, and either can be forced for benchmarking.

namespace arflow::kern {

template <typename T>
struct Funcs {
    // c = op(a) * op(b) + beta * c, row-major.
    // op(a): m x k, op(b): k x n, c: m x n. ta/tb transpose the physical
    // operand (a is k x m in memory when ta, b is n x k when tb).
    void (*matmul)(const T* a, const T* b, T* c, int64_t m, int64_t k,
                   int64_t n, bool ta, bool tb, T beta);

    void (*add)(const T* a, const T* b, T* out, int64_t n);
    void (*sub)(const T* a, const T* b, T* out, int64_t n);
    void (*mul)(const T* a, const T* b, T* out, int64_t n);
    void (*axpy)(T alpha, const T* x, T* y, int64_t n);   // y += alpha * x
    void (*scale)(const T* a, T alpha, T* out, int64_t n);
    // y += a .* b, the elementwise-product accumulate used in backward rules
    void (*mul_acc)(const T* a, const T* b, T* y, int64_t n);

    T (*sum)(const T* a, int64_t n);
    T (*dot)(const T* a, const T* b, int64_t n);
    T (*sumsq_diff)(const T* a, const T* b, int64_t n);

    void (*vexp)(const T* a, T* out, int64_t n);
    void (*vsigmoid)(const T* a, T* out, int64_t n);
    void (*vsilu)(const T* a, T* out, int64_t n);
};

// Kernel table in effect for this process (scalar unless AVX2 is available
// and not disabled). Stable for the lifetime of the process except through
// force_scalar().
template <typename T>
const Funcs<T>& active();

// The portable scalar reference table, always available.
template <typename T>
const Funcs<T>& reference();

// True when the CPU+build support the SIMD variant.
bool simd_available();

// Name of the active variant: "scalar" or "avx2".
const char* active_name();

// Force the scalar path (tests and benchmarks). ARFLOW_NO_SIMD=1 in the
// environment has the same effect at startup.
void force_scalar(bool on);

} // namespace arflow::kern
