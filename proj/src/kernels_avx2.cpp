#include "hymirec/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define HYMIREC_HAVE_AVX2_TU 1
#include <immintrin.h>
#else
#define HYMIREC_HAVE_AVX2_TU 0
#endif

namespace hymirec::kern {

#if HYMIREC_HAVE_AVX2_TU
namespace {

// Horizontal sums follow the reference reduction tree exactly; see
// kernels_scalar.cpp. No FMA: mul and add round separately, as in scalar.

inline float hsum256_ps(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 t = _mm_add_ps(lo, hi);              // [t0 t1 t2 t3]
    __m128 shuf = _mm_movehdup_ps(t);           // [t1 t1 t3 t3]
    __m128 sums = _mm_add_ps(t, shuf);          // [t0+t1, -, t2+t3, -]
    shuf = _mm_movehl_ps(shuf, sums);           // [t2+t3, ...]
    sums = _mm_add_ss(sums, shuf);              // (t0+t1)+(t2+t3)
    return _mm_cvtss_f32(sums);
}

inline double hsum256_pd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    __m128d t = _mm_add_pd(lo, hi);             // [a0+a2, a1+a3]
    __m128d shuf = _mm_unpackhi_pd(t, t);
    return _mm_cvtsd_f64(_mm_add_sd(t, shuf));  // (a0+a2)+(a1+a3)
}

float dot_f32_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    float r = hsum256_ps(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double dot_f64_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    double r = hsum256_pd(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_f32_avx2(float a, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f32_avx2(float* x, float a, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

void scale_f64_avx2(double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

}  // namespace
#endif  // HYMIREC_HAVE_AVX2_TU

namespace detail {

const KernelTable* avx2_table() {
#if HYMIREC_HAVE_AVX2_TU
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const KernelTable t = {dot_f32_avx2, dot_f64_avx2, axpy_f32_avx2,
                                  axpy_f64_avx2, scale_f32_avx2, scale_f64_avx2};
    return &t;
#else
    return nullptr;
#endif
}

}  // namespace detail
}  // namespace hymirec::kern
