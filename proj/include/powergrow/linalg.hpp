#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "powergrow/util.hpp"

namespace powergrow {

// Solves A x = b in place for dense row-major A via LU with partial pivoting.
// Returns false when A is numerically singular.
inline bool lu_solve(std::vector<double> a, std::size_t n, std::vector<double>& b) {
    if (a.size() != n * n || b.size() != n) throw UsageError("lu_solve: dimension mismatch");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(a[perm[col] * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double v = std::fabs(a[perm[r] * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-12) return false;
        std::swap(perm[col], perm[pivot]);
        const std::size_t prow = perm[col];
        const double diag = a[prow * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const std::size_t row = perm[r];
            const double f = a[row * n + col] / diag;
            if (f == 0.0) continue;
            a[row * n + col] = f;
            for (std::size_t c = col + 1; c < n; ++c) a[row * n + c] -= f * a[prow * n + c];
        }
    }
    // forward substitution on permuted rows
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = b[perm[r]];
        for (std::size_t c = 0; c < r; ++c) s -= a[perm[r] * n + c] * y[c];
        y[r] = s;
    }
    // back substitution
    for (std::size_t r = n; r-- > 0;) {
        double s = y[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= a[perm[r] * n + c] * b[c];
        b[r] = s / a[perm[r] * n + r];
    }
    return true;
}

// Eigenvalues of a symmetric matrix: Householder tridiagonalization followed
// by QL iteration with implicit shifts. Values returned in ascending order.
inline std::vector<double> sym_eigenvalues(std::vector<double> a, std::size_t n) {
    if (a.size() != n * n) throw UsageError("sym_eigenvalues: dimension mismatch");
    std::vector<double> d(n, 0.0), e(n, 0.0);
    // tridiagonalization (without accumulating transforms)
    for (std::size_t i = n; i-- > 1;) {
        std::size_t l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(a[i * n + k]);
            if (scale == 0.0) {
                e[i] = a[i * n + l];
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                double f = a[i * n + l];
                double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a[j * n + k] * a[i * n + k];
                    for (std::size_t k = j + 1; k <= l; ++k) g += a[k * n + j] * a[i * n + k];
                    e[j] = g / h;
                    f += e[j] * a[i * n + j];
                }
                double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a[i * n + j];
                    e[j] = g = e[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k)
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    e[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i * n + i];
    // QL with implicit shifts
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= 1e-14 * dd) break;
            }
            if (m != l) {
                if (++iter == 50) throw NumericalError("sym_eigenvalues: QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::fabs(r) : -std::fabs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && m > l + 1) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
    std::sort(d.begin(), d.end());
    return d;
}

}  // namespace powergrow
