#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "hymirec/kernels.hpp"

namespace hymirec {

/// Dense row-major double matrix. Just enough linear algebra for the
/// encoders; everything funnels through the kernel layer.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    std::span<const double> row_view(int i) const { return {row(i), static_cast<std::size_t>(cols)}; }

    void zero() { a.assign(a.size(), 0.0); }
};

/// C = A * B
inline void matmul(Mat& c, const Mat& a, const Mat& b) {
    assert(a.cols == b.rows);
    c = Mat(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (int k = 0; k < a.cols; ++k)
            kern::axpy(ai[k], b.row(k), ci, static_cast<std::size_t>(b.cols));
    }
}

/// C = A * B^T  (rows dot rows; the contiguous fast path)
inline void matmul_nt(Mat& c, const Mat& a, const Mat& b) {
    assert(a.cols == b.cols);
    c = Mat(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j)
            c.at(i, j) = kern::dot(a.row(i), b.row(j), static_cast<std::size_t>(a.cols));
}

/// C += A^T * B
inline void matmul_tn_acc(Mat& c, const Mat& a, const Mat& b) {
    assert(a.rows == b.rows);
    assert(c.rows == a.cols && c.cols == b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        for (int k = 0; k < a.cols; ++k)
            kern::axpy(ai[k], b.row(i), c.row(k), static_cast<std::size_t>(b.cols));
    }
}

inline void add_inplace(Mat& y, const Mat& x) {
    assert(y.rows == x.rows && y.cols == x.cols);
    kern::axpy(1.0, x.a.data(), y.a.data(), y.a.size());
}

}  // namespace hymirec
