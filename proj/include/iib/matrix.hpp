#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "iib/errors.hpp"

namespace iib {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit floats.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;  // rows * cols entries, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

// y = A x
inline void matvec(const Matrix& a, const Vec& x, Vec& y) {
    if (x.size() != a.cols) throw InvalidInput("matvec: vector length does not match matrix cols");
    y.assign(a.rows, 0.0);
    const double* row = a.data.data();
    for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

// y = A^T x
inline void matvec_transposed(const Matrix& a, const Vec& x, Vec& y) {
    if (x.size() != a.rows) throw InvalidInput("matvec_transposed: vector length does not match matrix rows");
    y.assign(a.cols, 0.0);
    const double* row = a.data.data();
    for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
}

// a += u v^T
inline void add_outer(Matrix& a, const Vec& u, const Vec& v) {
    if (u.size() != a.rows || v.size() != a.cols) throw InvalidInput("add_outer: shape mismatch");
    double* row = a.data.data();
    for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
        const double ur = u[r];
        for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

inline void axpy(double s, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

}  // namespace iib
