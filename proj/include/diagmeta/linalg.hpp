#pragma once

// Minimal dense matrix helpers for the small (<= 5x5) systems used by the
// covariance machinery.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace diagmeta {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool finite() const {
        for (double v : a) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

inline Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) throw std::invalid_argument("matmul: shape mismatch");
    Matrix out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = x(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& x) {
    Matrix out(x.cols, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    }
    return out;
}

// Lower Cholesky factor of a symmetric positive definite matrix, or nullopt.
inline std::optional<Matrix> cholesky(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("cholesky: matrix must be square");
    const std::size_t n = m.rows;
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = m(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }
    return l;
}

// Inverse of a symmetric positive definite matrix via its Cholesky factor.
inline std::optional<Matrix> inverse_spd(const Matrix& m) {
    const auto lopt = cholesky(m);
    if (!lopt) return std::nullopt;
    const Matrix& l = *lopt;
    const std::size_t n = m.rows;

    Matrix inv(n, n);
    std::vector<double> y(n), x(n);
    for (std::size_t col = 0; col < n; ++col) {
        // forward solve L y = e_col
        for (std::size_t i = 0; i < n; ++i) {
            double v = (i == col) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
            y[i] = v / l(i, i);
        }
        // back solve L^T x = y
        for (std::size_t ii = n; ii-- > 0;) {
            double v = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
            x[ii] = v / l(ii, ii);
        }
        for (std::size_t i = 0; i < n; ++i) inv(i, col) = x[i];
    }
    // symmetrize against round-off
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = inv(j, i) = v;
        }
    }
    return inv;
}

}  // namespace diagmeta
