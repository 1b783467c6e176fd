#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pm {

using Vec = std::vector<double>;

/// Dense square-ish matrix with row-major storage. All assembly operations
/// in this library produce entrywise nonnegative matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }

    Vec apply(const Vec& x) const {
        if (x.size() != cols_)
            throw std::invalid_argument("Matrix::apply: dimension mismatch");
        Vec y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j)
                acc += data_[i * cols_ + j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    Matrix multiply(const Matrix& other) const {
        if (cols_ != other.rows_)
            throw std::invalid_argument("Matrix::multiply: dimension mismatch");
        Matrix out(rows_, other.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < other.cols_; ++j)
                    out(i, j) += a * other(k, j);
            }
        return out;
    }

    bool nonnegative() const {
        for (double v : data_)
            if (!(v >= 0.0)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double sup_norm(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

/// Solves A y = b by Gaussian elimination with partial pivoting.
/// Throws on a (numerically) singular pivot.
inline Vec solve_linear(Matrix a, Vec b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n)
        throw std::invalid_argument("solve_linear: dimension mismatch");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (std::abs(a(piv, k)) < 1e-300)
            throw std::runtime_error("solve_linear: singular matrix");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double factor = a(i, k) / a(k, k);
            if (factor == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) a(i, j) -= factor * a(k, j);
            b[i] -= factor * b[k];
        }
    }
    Vec y(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= a(i, j) * y[j];
        y[i] = acc / a(i, i);
    }
    return y;
}

/// Inverse via column-by-column solves; used for the next-generation operator.
inline Matrix invert(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vec e(n, 0.0);
        e[j] = 1.0;
        Vec col = solve_linear(a, std::move(e));
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    return inv;
}

struct PowerIterationResult {
    double value = 0.0;
    Vec vector;          // normalized (sup norm 1), entrywise nonnegative
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Dominant eigenvalue of a nonnegative matrix by power iteration on M + I.
/// The shift makes the iteration converge even for imprimitive (cyclic)
/// matrices; 1 is subtracted from the resulting eigenvalue at the end.
/// Deterministic all-ones start vector.
inline PowerIterationResult power_iteration(const Matrix& m,
                                            double rel_tol = 1e-12,
                                            std::size_t max_iter = 100000) {
    const std::size_t n = m.rows();
    if (m.cols() != n)
        throw std::invalid_argument("power_iteration: matrix not square");
    if (!m.nonnegative())
        throw std::invalid_argument("power_iteration: negative entries");

    PowerIterationResult res;
    Vec x(n, 1.0);
    double prev = std::numeric_limits<double>::quiet_NaN();
    double prev2 = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t it = 1; it <= max_iter; ++it) {
        Vec y = m.apply(x);
        for (std::size_t i = 0; i < n; ++i) y[i] += x[i];  // (M + I) x
        const double norm = sup_norm(y);
        if (norm == 0.0) {  // M + I annihilates x only if x = 0
            res.value = 0.0;
            res.vector = std::move(y);
            res.iterations = it;
            res.converged = true;
            return res;
        }
        for (double& v : y) v /= norm;
        const double shifted = norm;  // Rayleigh-like estimate of rho(M)+1
        res.iterations = it;
        if (it > 1 && std::abs(shifted - prev) <= rel_tol * std::abs(shifted)) {
            // the value sequence converges geometrically; estimate the
            // remaining tail from the last two increments (Aitken) and only
            // stop once the extrapolated error is also inside tolerance
            const double d2 = shifted - prev;
            const double d1 = prev - prev2;
            double value = shifted;
            bool tight = (d2 == 0.0);
            if (!tight) {
                if (std::isfinite(d1) && d1 != 0.0 && d1 != d2) {
                    const double ratio = d2 / d1;
                    if (ratio > 0.0 && ratio < 1.0) {
                        const double tail = d2 * ratio / (1.0 - ratio);
                        tight = std::abs(tail) <= rel_tol * std::abs(shifted);
                        if (tight) value = shifted + tail;
                    } else {
                        tight = true;  // no geometric decay left to sum
                    }
                } else {
                    tight = true;
                }
            }
            if (tight) {
                // residual check: ||(M+I)y - value*y||_inf
                Vec z = m.apply(y);
                double resid = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    resid = std::max(resid, std::abs(z[i] + y[i] - value * y[i]));
                res.value = value - 1.0;
                res.vector = std::move(y);
                res.residual = resid;
                res.converged = true;
                return res;
            }
        }
        prev2 = prev;
        prev = shifted;
        x = std::move(y);
    }
    res.converged = false;
    res.value = prev - 1.0;
    res.vector = std::move(x);
    throw std::runtime_error(
        "power_iteration: no convergence after " + std::to_string(max_iter) +
        " iterations (estimate " + std::to_string(res.value) + ")");
}

}  // namespace pm
