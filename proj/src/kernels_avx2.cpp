// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma; callers reach these
// only after the runtime CPU check in kernels_dispatch.cpp.

#include "kernels_simd.hpp"

#if defined(ARFLOW_HAVE_AVX2_BUILD)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace arflow::kern {
namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
}

inline double hsum4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
}

// ---------------------------------------------------------------------------
// matmul, float
// ---------------------------------------------------------------------------

template <typename T>
void prescale(T* c, int64_t n, T beta) {
    if (beta == T(0)) {
        std::memset(c, 0, sizeof(T) * static_cast<size_t>(n));
    } else if (beta != T(1)) {
        for (int64_t i = 0; i < n; ++i) c[i] *= beta;
    }
}

// Shared tile kernel for NN (ta=false) and TN (ta=true): op(b) rows are
// contiguous either way, only the a indexing changes.
template <bool TA>
void matmul_stream_f32(const float* a, const float* b, float* c, int64_t m,
                       int64_t k, int64_t n) {
    auto aat = [&](int64_t i, int64_t l) -> float {
        return TA ? a[l * m + i] : a[i * k + l];
    };
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        int64_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256 acc[4][2];
            for (int r = 0; r < 4; ++r) {
                acc[r][0] = _mm256_loadu_ps(c + (i + r) * n + j);
                acc[r][1] = _mm256_loadu_ps(c + (i + r) * n + j + 8);
            }
            for (int64_t l = 0; l < k; ++l) {
                __m256 b0 = _mm256_loadu_ps(b + l * n + j);
                __m256 b1 = _mm256_loadu_ps(b + l * n + j + 8);
                for (int r = 0; r < 4; ++r) {
                    __m256 av = _mm256_set1_ps(aat(i + r, l));
                    acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                _mm256_storeu_ps(c + (i + r) * n + j, acc[r][0]);
                _mm256_storeu_ps(c + (i + r) * n + j + 8, acc[r][1]);
            }
        }
        for (; j + 8 <= n; j += 8) {
            __m256 acc[4];
            for (int r = 0; r < 4; ++r)
                acc[r] = _mm256_loadu_ps(c + (i + r) * n + j);
            for (int64_t l = 0; l < k; ++l) {
                __m256 b0 = _mm256_loadu_ps(b + l * n + j);
                for (int r = 0; r < 4; ++r)
                    acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(aat(i + r, l)), b0,
                                             acc[r]);
            }
            for (int r = 0; r < 4; ++r)
                _mm256_storeu_ps(c + (i + r) * n + j, acc[r]);
        }
        for (; j < n; ++j) {
            float s[4] = {c[i * n + j], c[(i + 1) * n + j], c[(i + 2) * n + j],
                          c[(i + 3) * n + j]};
            for (int64_t l = 0; l < k; ++l) {
                float bv = b[l * n + j];
                for (int r = 0; r < 4; ++r) s[r] += aat(i + r, l) * bv;
            }
            for (int r = 0; r < 4; ++r) c[(i + r) * n + j] = s[r];
        }
    }
    for (; i < m; ++i) {
        int64_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 acc = _mm256_loadu_ps(c + i * n + j);
            for (int64_t l = 0; l < k; ++l)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(aat(i, l)),
                                      _mm256_loadu_ps(b + l * n + j), acc);
            _mm256_storeu_ps(c + i * n + j, acc);
        }
        for (; j < n; ++j) {
            float s = c[i * n + j];
            for (int64_t l = 0; l < k; ++l) s += aat(i, l) * b[l * n + j];
            c[i * n + j] = s;
        }
    }
}

// NT: c[i][j] += dot(a row i, b row j); both rows contiguous over k.
void matmul_nt_f32(const float* a, const float* b, float* c, int64_t m,
                   int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        int64_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
            __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
            const float* b0 = b + j * k;
            const float* b1 = b + (j + 1) * k;
            const float* b2 = b + (j + 2) * k;
            const float* b3 = b + (j + 3) * k;
            int64_t l = 0;
            for (; l + 8 <= k; l += 8) {
                __m256 av = _mm256_loadu_ps(arow + l);
                s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + l), s0);
                s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + l), s1);
                s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + l), s2);
                s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + l), s3);
            }
            float r0 = hsum8(s0), r1 = hsum8(s1), r2 = hsum8(s2), r3 = hsum8(s3);
            for (; l < k; ++l) {
                float av = arow[l];
                r0 += av * b0[l];
                r1 += av * b1[l];
                r2 += av * b2[l];
                r3 += av * b3[l];
            }
            c[i * n + j] += r0;
            c[i * n + j + 1] += r1;
            c[i * n + j + 2] += r2;
            c[i * n + j + 3] += r3;
        }
        for (; j < n; ++j) {
            const float* brow = b + j * k;
            __m256 s = _mm256_setzero_ps();
            int64_t l = 0;
            for (; l + 8 <= k; l += 8)
                s = _mm256_fmadd_ps(_mm256_loadu_ps(arow + l),
                                    _mm256_loadu_ps(brow + l), s);
            float r = hsum8(s);
            for (; l < k; ++l) r += arow[l] * brow[l];
            c[i * n + j] += r;
        }
    }
}

void matmul_f32(const float* a, const float* b, float* c, int64_t m, int64_t k,
                int64_t n, bool ta, bool tb, float beta) {
    prescale(c, m * n, beta);
    if (!tb) {
        if (!ta)
            matmul_stream_f32<false>(a, b, c, m, k, n);
        else
            matmul_stream_f32<true>(a, b, c, m, k, n);
    } else if (!ta) {
        matmul_nt_f32(a, b, c, m, k, n);
    } else {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                float s = 0.f;
                for (int64_t l = 0; l < k; ++l) s += a[l * m + i] * b[j * k + l];
                c[i * n + j] += s;
            }
    }
}

// ---------------------------------------------------------------------------
// matmul, double (4-wide)
// ---------------------------------------------------------------------------

template <bool TA>
void matmul_stream_f64(const double* a, const double* b, double* c, int64_t m,
                       int64_t k, int64_t n) {
    auto aat = [&](int64_t i, int64_t l) -> double {
        return TA ? a[l * m + i] : a[i * k + l];
    };
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        int64_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc[4][2];
            for (int r = 0; r < 4; ++r) {
                acc[r][0] = _mm256_loadu_pd(c + (i + r) * n + j);
                acc[r][1] = _mm256_loadu_pd(c + (i + r) * n + j + 4);
            }
            for (int64_t l = 0; l < k; ++l) {
                __m256d b0 = _mm256_loadu_pd(b + l * n + j);
                __m256d b1 = _mm256_loadu_pd(b + l * n + j + 4);
                for (int r = 0; r < 4; ++r) {
                    __m256d av = _mm256_set1_pd(aat(i + r, l));
                    acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                _mm256_storeu_pd(c + (i + r) * n + j, acc[r][0]);
                _mm256_storeu_pd(c + (i + r) * n + j + 4, acc[r][1]);
            }
        }
        for (; j < n; ++j) {
            double s[4] = {c[i * n + j], c[(i + 1) * n + j], c[(i + 2) * n + j],
                           c[(i + 3) * n + j]};
            for (int64_t l = 0; l < k; ++l) {
                double bv = b[l * n + j];
                for (int r = 0; r < 4; ++r) s[r] += aat(i + r, l) * bv;
            }
            for (int r = 0; r < 4; ++r) c[(i + r) * n + j] = s[r];
        }
    }
    for (; i < m; ++i) {
        int64_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d acc = _mm256_loadu_pd(c + i * n + j);
            for (int64_t l = 0; l < k; ++l)
                acc = _mm256_fmadd_pd(_mm256_set1_pd(aat(i, l)),
                                      _mm256_loadu_pd(b + l * n + j), acc);
            _mm256_storeu_pd(c + i * n + j, acc);
        }
        for (; j < n; ++j) {
            double s = c[i * n + j];
            for (int64_t l = 0; l < k; ++l) s += aat(i, l) * b[l * n + j];
            c[i * n + j] = s;
        }
    }
}

void matmul_nt_f64(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            __m256d s = _mm256_setzero_pd();
            int64_t l = 0;
            for (; l + 4 <= k; l += 4)
                s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + l),
                                    _mm256_loadu_pd(brow + l), s);
            double r = hsum4(s);
            for (; l < k; ++l) r += arow[l] * brow[l];
            c[i * n + j] += r;
        }
    }
}

void matmul_f64(const double* a, const double* b, double* c, int64_t m,
                int64_t k, int64_t n, bool ta, bool tb, double beta) {
    prescale(c, m * n, beta);
    if (!tb) {
        if (!ta)
            matmul_stream_f64<false>(a, b, c, m, k, n);
        else
            matmul_stream_f64<true>(a, b, c, m, k, n);
    } else if (!ta) {
        matmul_nt_f64(a, b, c, m, k, n);
    } else {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (int64_t l = 0; l < k; ++l) s += a[l * m + i] * b[j * k + l];
                c[i * n + j] += s;
            }
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

void add_f32(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                                _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                                _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                                _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_f32(float alpha, const float* x, float* y, int64_t n) {
    __m256 av = _mm256_set1_ps(alpha);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f32(const float* a, float alpha, float* out, int64_t n) {
    __m256 av = _mm256_set1_ps(alpha);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(a + i)));
    for (; i < n; ++i) out[i] = a[i] * alpha;
}

void mul_acc_f32(const float* a, const float* b, float* y, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i,
                         _mm256_fmadd_ps(_mm256_loadu_ps(a + i),
                                         _mm256_loadu_ps(b + i),
                                         _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

void add_f64(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f64(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f64(const double* a, const double* b, double* out, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_f64(double alpha, const double* x, double* y, int64_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f64(const double* a, double alpha, double* out, int64_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(a + i)));
    for (; i < n; ++i) out[i] = a[i] * alpha;
}

void mul_acc_f64(const double* a, const double* b, double* y, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i,
                         _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                         _mm256_loadu_pd(b + i),
                                         _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

float sum_f32(const float* a, int64_t n) {
    __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_add_ps(s0, _mm256_loadu_ps(a + i));
        s1 = _mm256_add_ps(s1, _mm256_loadu_ps(a + i + 8));
    }
    float r = hsum8(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) r += a[i];
    return r;
}

float dot_f32(const float* a, const float* b, int64_t n) {
    __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
        s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                             _mm256_loadu_ps(b + i + 8), s1);
    }
    float r = hsum8(_mm256_add_ps(s0, s1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

float sumsq_diff_f32(const float* a, const float* b, int64_t n) {
    __m256 s = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        s = _mm256_fmadd_ps(d, d, s);
    }
    float r = hsum8(s);
    for (; i < n; ++i) {
        float d = a[i] - b[i];
        r += d * d;
    }
    return r;
}

double sum_f64(const double* a, int64_t n) {
    __m256d s = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) s = _mm256_add_pd(s, _mm256_loadu_pd(a + i));
    double r = hsum4(s);
    for (; i < n; ++i) r += a[i];
    return r;
}

double dot_f64(const double* a, const double* b, int64_t n) {
    __m256d s = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        s = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s);
    double r = hsum4(s);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sumsq_diff_f64(const double* a, const double* b, int64_t n) {
    __m256d s = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d =
            _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        s = _mm256_fmadd_pd(d, d, s);
    }
    double r = hsum4(s);
    for (; i < n; ++i) {
        double d = a[i] - b[i];
        r += d * d;
    }
    return r;
}

// ---------------------------------------------------------------------------
// transcendental, float (Cephes-style exp polynomial)
// ---------------------------------------------------------------------------

inline __m256 exp8(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-87.3365478515625f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 p0 = _mm256_set1_ps(1.9875691500e-4f);
    const __m256 p1 = _mm256_set1_ps(1.3981999507e-3f);
    const __m256 p2 = _mm256_set1_ps(8.3334519073e-3f);
    const __m256 p3 = _mm256_set1_ps(4.1665795894e-2f);
    const __m256 p4 = _mm256_set1_ps(1.6666665459e-1f);
    const __m256 p5 = _mm256_set1_ps(5.0000001201e-1f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);

    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);

    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    __m256 z = _mm256_mul_ps(x, x);
    __m256 y = p0;
    y = _mm256_fmadd_ps(y, x, p1);
    y = _mm256_fmadd_ps(y, x, p2);
    y = _mm256_fmadd_ps(y, x, p3);
    y = _mm256_fmadd_ps(y, x, p4);
    y = _mm256_fmadd_ps(y, x, p5);
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, one);

    __m256i imm = _mm256_cvtps_epi32(fx);
    imm = _mm256_add_epi32(imm, _mm256_set1_epi32(0x7f));
    imm = _mm256_slli_epi32(imm, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(imm));
}

void vexp_f32(const float* a, float* out, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, exp8(_mm256_loadu_ps(a + i)));
    for (; i < n; ++i) out[i] = std::exp(a[i]);
}

void vsigmoid_f32(const float* a, float* out, int64_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 e = exp8(_mm256_sub_ps(_mm256_setzero_ps(),
                                      _mm256_loadu_ps(a + i)));
        _mm256_storeu_ps(out + i, _mm256_div_ps(one, _mm256_add_ps(one, e)));
    }
    for (; i < n; ++i) out[i] = 1.0f / (1.0f + std::exp(-a[i]));
}

void vsilu_f32(const float* a, float* out, int64_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 x = _mm256_loadu_ps(a + i);
        __m256 e = exp8(_mm256_sub_ps(_mm256_setzero_ps(), x));
        _mm256_storeu_ps(out + i, _mm256_div_ps(x, _mm256_add_ps(one, e)));
    }
    for (; i < n; ++i) out[i] = a[i] / (1.0f + std::exp(-a[i]));
}

// Double-precision transcendentals stay on libm; the f64 path is the oracle
// mode where accuracy beats speed.
void vexp_f64(const double* a, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}
void vsigmoid_f64(const double* a, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
}
void vsilu_f64(const double* a, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] / (1.0 + std::exp(-a[i]));
}

} // namespace

const Funcs<float>& avx2_table_f32() {
    static const Funcs<float> t = [] {
        Funcs<float> f;
        f.matmul = &matmul_f32;
        f.add = &add_f32;
        f.sub = &sub_f32;
        f.mul = &mul_f32;
        f.axpy = &axpy_f32;
        f.scale = &scale_f32;
        f.mul_acc = &mul_acc_f32;
        f.sum = &sum_f32;
        f.dot = &dot_f32;
        f.sumsq_diff = &sumsq_diff_f32;
        f.vexp = &vexp_f32;
        f.vsigmoid = &vsigmoid_f32;
        f.vsilu = &vsilu_f32;
        return f;
    }();
    return t;
}

const Funcs<double>& avx2_table_f64() {
    static const Funcs<double> t = [] {
        Funcs<double> f;
        f.matmul = &matmul_f64;
        f.add = &add_f64;
        f.sub = &sub_f64;
        f.mul = &mul_f64;
        f.axpy = &axpy_f64;
        f.scale = &scale_f64;
        f.mul_acc = &mul_acc_f64;
        f.sum = &sum_f64;
        f.dot = &dot_f64;
        f.sumsq_diff = &sumsq_diff_f64;
        f.vexp = &vexp_f64;
        f.vsigmoid = &vsigmoid_f64;
        f.vsilu = &vsilu_f64;
        return f;
    }();
    return t;
}

} // namespace arflow::kern

#endif // ARFLOW_HAVE_AVX2_BUILD
