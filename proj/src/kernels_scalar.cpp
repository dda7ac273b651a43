#include "hymirec/kernels.hpp"

// Reference kernels. The blocked accumulator layout and the reduction tree
// are part of the contract: SIMD backends must produce identical bits.
//
//   f32: 8 lanes;  r = ((a0+a4)+(a1+a5)) + ((a2+a6)+(a3+a7)), then scalar tail
//   f64: 4 lanes;  r = (a0+a2) + (a1+a3), then scalar tail
//
// Build with -ffp-contract=off so the compiler cannot fuse mul+add here while
// the intrinsic paths use separate mul/add.

namespace hymirec::kern {
namespace {

float dot_f32_scalar(const float* a, const float* b, std::size_t n) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    const float t0 = acc[0] + acc[4];
    const float t1 = acc[1] + acc[5];
    const float t2 = acc[2] + acc[6];
    const float t3 = acc[3] + acc[7];
    float r = (t0 + t1) + (t2 + t3);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double dot_f64_scalar(const double* a, const double* b, std::size_t n) {
    double acc[4] = {0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (int l = 0; l < 4; ++l) acc[l] += a[i + l] * b[i + l];
    double r = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void axpy_f32_scalar(float a, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_f32_scalar(float* x, float a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void scale_f64_scalar(double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() {
    static const KernelTable t = {dot_f32_scalar, dot_f64_scalar, axpy_f32_scalar,
                                  axpy_f64_scalar, scale_f32_scalar, scale_f64_scalar};
    return t;
}

}  // namespace detail
}  // namespace hymirec::kern
