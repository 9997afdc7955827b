#include "concentra/util.hpp"

#include <algorithm>
#include <cmath>

namespace concentra {

std::vector<double> least_squares(const std::vector<std::vector<double>>& columns,
                                  std::span<const double> rhs) {
    const int k = int(columns.size());
    const std::size_t m = rhs.size();
    for (const auto& c : columns)
        if (c.size() != m) throw std::invalid_argument("least_squares: ragged design");
    std::vector<double> ata(std::size_t(k) * k, 0.0), atb(k, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            double s = 0;
            for (std::size_t r = 0; r < m; ++r) s += columns[i][r] * columns[j][r];
            ata[std::size_t(i) * k + j] = s;
        }
        double s = 0;
        for (std::size_t r = 0; r < m; ++r) s += columns[i][r] * rhs[r];
        atb[i] = s;
    }
    return solve_dense(std::move(ata), k, std::move(atb));
}

std::vector<double> solve_dense(std::vector<double> a, int n, std::vector<double> b) {
    // Gaussian elimination with partial pivoting; n is tiny everywhere we use this.
    std::vector<int> piv(n);
    for (int i = 0; i < n; ++i) piv[i] = i;
    for (int col = 0; col < n; ++col) {
        int best = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[std::size_t(r) * n + col]) > std::abs(a[std::size_t(best) * n + col])) best = r;
        if (best != col) {
            for (int c = 0; c < n; ++c) std::swap(a[std::size_t(best) * n + c], a[std::size_t(col) * n + c]);
            std::swap(b[best], b[col]);
        }
        const double d = a[std::size_t(col) * n + col];
        if (d == 0.0) throw std::runtime_error("solve_dense: singular matrix");
        for (int r = col + 1; r < n; ++r) {
            const double f = a[std::size_t(r) * n + col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[std::size_t(r) * n + c] -= f * a[std::size_t(col) * n + c];
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[std::size_t(r) * n + c] * b[c];
        b[r] = s / a[std::size_t(r) * n + r];
    }
    return b;
}

std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
    auto at = [&](int i, int j) -> double& { return a[std::size_t(i) * n + j]; };
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += sqr(at(i, j));
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) ev[i] = at(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

double symmetric_condition(const std::vector<double>& a, int n) {
    auto ev = symmetric_eigenvalues(a, n);
    double lo = 1e300, hi = 0;
    for (double v : ev) {
        lo = std::min(lo, std::abs(v));
        hi = std::max(hi, std::abs(v));
    }
    return lo == 0.0 ? 1e300 : hi / lo;
}

}  // namespace concentra
