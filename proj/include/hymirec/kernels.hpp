#pragma once

#include <cstddef>

// Data-parallel inner loops shared by clustering, quantization, attention and
// retrieval scoring. A scalar reference implementation defines the exact
// arithmetic (fixed-width blocked accumulation, fixed reduction tree); the
// AVX2 and NEON variants reproduce it bit-for-bit, so backends are
// interchangeable and equivalence is testable with exact comparisons.
namespace hymirec::kern {

enum class Backend { Scalar, Avx2, Neon };

const char* backend_name(Backend b);
bool backend_supported(Backend b);

/// Currently active backend (auto-detected on first use; HYMIREC_KERNELS
/// env var = scalar|avx2|neon overrides the detection).
Backend active_backend();

/// Force a backend, e.g. for equivalence tests. Throws if unsupported.
void select_backend(Backend b);

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

/// y += a * x
void axpy(float a, const float* x, float* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);

/// x *= a
void scale(float* x, float a, std::size_t n);
void scale(double* x, double a, std::size_t n);

struct KernelTable {
    float (*dot_f32)(const float*, const float*, std::size_t);
    double (*dot_f64)(const double*, const double*, std::size_t);
    void (*axpy_f32)(float, const float*, float*, std::size_t);
    void (*axpy_f64)(double, const double*, double*, std::size_t);
    void (*scale_f32)(float*, float, std::size_t);
    void (*scale_f64)(double*, double, std::size_t);
};

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in / unsupported
const KernelTable* neon_table();
}  // namespace detail

}  // namespace hymirec::kern
