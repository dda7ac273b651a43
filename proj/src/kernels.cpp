#include "hymirec/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace hymirec::kern {
namespace {

struct Dispatch {
    const KernelTable* table;
    Backend backend;
};

Dispatch detect() {
    const char* env = std::getenv("HYMIREC_KERNELS");
    if (env) {
        const std::string want(env);
        if (want == "scalar") return {&detail::scalar_table(), Backend::Scalar};
        if (want == "avx2" && detail::avx2_table()) return {detail::avx2_table(), Backend::Avx2};
        if (want == "neon" && detail::neon_table()) return {detail::neon_table(), Backend::Neon};
        // fall through to auto-detection on unknown/unsupported value
    }
    if (const KernelTable* t = detail::avx2_table()) return {t, Backend::Avx2};
    if (const KernelTable* t = detail::neon_table()) return {t, Backend::Neon};
    return {&detail::scalar_table(), Backend::Scalar};
}

Dispatch& dispatch() {
    static Dispatch d = detect();
    return d;
}

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "?";
}

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::Scalar: return true;
        case Backend::Avx2: return detail::avx2_table() != nullptr;
        case Backend::Neon: return detail::neon_table() != nullptr;
    }
    return false;
}

Backend active_backend() { return dispatch().backend; }

void select_backend(Backend b) {
    switch (b) {
        case Backend::Scalar:
            dispatch() = {&detail::scalar_table(), b};
            return;
        case Backend::Avx2:
            if (const KernelTable* t = detail::avx2_table()) {
                dispatch() = {t, b};
                return;
            }
            break;
        case Backend::Neon:
            if (const KernelTable* t = detail::neon_table()) {
                dispatch() = {t, b};
                return;
            }
            break;
    }
    throw std::invalid_argument(std::string("kernel backend not supported on this cpu: ") +
                                backend_name(b));
}

float dot(const float* a, const float* b, std::size_t n) { return dispatch().table->dot_f32(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return dispatch().table->dot_f64(a, b, n); }
void axpy(float a, const float* x, float* y, std::size_t n) { dispatch().table->axpy_f32(a, x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { dispatch().table->axpy_f64(a, x, y, n); }
void scale(float* x, float a, std::size_t n) { dispatch().table->scale_f32(x, a, n); }
void scale(double* x, double a, std::size_t n) { dispatch().table->scale_f64(x, a, n); }

}  // namespace hymirec::kern
