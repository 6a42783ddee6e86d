#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"

namespace kwc {

/// Tridiagonal matrix: row i holds lower[i] (col i-1), diag[i], upper[i] (col i+1).
/// lower[0] and upper[n-1] are ignored.
struct Tridiagonal {
    std::vector<double> lower, diag, upper;

    explicit Tridiagonal(std::size_t n = 0) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}
    std::size_t size() const { return diag.size(); }

    /// Replace row i by the identity row (Dirichlet pinning).
    void pin(std::size_t i) {
        lower[i] = 0.0;
        upper[i] = 0.0;
        diag[i] = 1.0;
    }

    std::vector<double> apply(std::span<const double> x) const {
        const std::size_t n = size();
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = diag[i] * x[i];
            if (i > 0) s += lower[i] * x[i - 1];
            if (i + 1 < n) s += upper[i] * x[i + 1];
            y[i] = s;
        }
        return y;
    }

    Tridiagonal transposed() const {
        const std::size_t n = size();
        Tridiagonal t(n);
        t.diag = diag;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            t.upper[i] = lower[i + 1];
            t.lower[i + 1] = upper[i];
        }
        return t;
    }
};

/// Thomas algorithm without pivoting. Intended for the diagonally dominant /
/// SPD systems assembled by the solvers; throws on a vanishing pivot.
inline std::vector<double> solve_tridiagonal(const Tridiagonal& m, std::span<const double> rhs) {
    const std::size_t n = m.size();
    if (rhs.size() != n) throw ShapeError("tridiagonal solve: rhs size mismatch");
    std::vector<double> c(n), d(n);
    double pivot = m.diag[0];
    if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot)) throw NumericalError("tridiagonal solver breakdown at row 0");
    c[0] = n > 1 ? m.upper[0] / pivot : 0.0;
    d[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = m.diag[i] - m.lower[i] * c[i - 1];
        if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot))
            throw NumericalError("tridiagonal solver breakdown at row " + std::to_string(i));
        c[i] = i + 1 < n ? m.upper[i] / pivot : 0.0;
        d[i] = (rhs[i] - m.lower[i] * d[i - 1]) / pivot;
    }
    std::vector<double> x(n);
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
    return x;
}

} // namespace kwc
