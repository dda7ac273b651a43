#include "hymirec/kernels.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)
#define HYMIREC_HAVE_NEON_TU 1
#include <arm_neon.h>
#else
#define HYMIREC_HAVE_NEON_TU 0
#endif

namespace hymirec::kern {

#if HYMIREC_HAVE_NEON_TU
namespace {

// Two q-registers give the same 8-lane (f32) / 4-lane (f64) accumulator
// layout as the reference; reductions are spelled out lane by lane to match
// the reference tree exactly.

float dot_f32_neon(const float* a, const float* b, std::size_t n) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);  // lanes 0..3
    float32x4_t acc1 = vdupq_n_f32(0.0f);  // lanes 4..7
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vaddq_f32(acc0, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
        acc1 = vaddq_f32(acc1, vmulq_f32(vld1q_f32(a + i + 4), vld1q_f32(b + i + 4)));
    }
    const float32x4_t t = vaddq_f32(acc0, acc1);  // [t0 t1 t2 t3]
    float r = (vgetq_lane_f32(t, 0) + vgetq_lane_f32(t, 1)) +
              (vgetq_lane_f32(t, 2) + vgetq_lane_f32(t, 3));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double dot_f64_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);  // lanes 0,1
    float64x2_t acc1 = vdupq_n_f64(0.0);  // lanes 2,3
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    }
    const float64x2_t t = vaddq_f64(acc0, acc1);  // [a0+a2, a1+a3]
    double r = vgetq_lane_f64(t, 0) + vgetq_lane_f64(t, 1);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_f32_neon(float a, const float* x, float* y, std::size_t n) {
    const float32x4_t va = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t vy = vld1q_f32(y + i);
        vy = vaddq_f32(vy, vmulq_f32(va, vld1q_f32(x + i)));
        vst1q_f32(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vy = vld1q_f64(y + i);
        vy = vaddq_f64(vy, vmulq_f64(va, vld1q_f64(x + i)));
        vst1q_f64(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f32_neon(float* x, float a, std::size_t n) {
    const float32x4_t va = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(x + i, vmulq_f32(vld1q_f32(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

void scale_f64_neon(double* x, double a, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

}  // namespace
#endif  // HYMIREC_HAVE_NEON_TU

namespace detail {

const KernelTable* neon_table() {
#if HYMIREC_HAVE_NEON_TU
    static const KernelTable t = {dot_f32_neon, dot_f64_neon, axpy_f32_neon,
                                  axpy_f64_neon, scale_f32_neon, scale_f64_neon};
    return &t;
#else
    return nullptr;
#endif
}

}  // namespace detail
}  // namespace hymirec::kern
