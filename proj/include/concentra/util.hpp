// Small shared helpers: 3-vectors, least-squares fits, tiny dense symmetric eigensolver.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace concentra {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Ordinary least squares y = a + b x. Returns {intercept, slope}.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_stderr = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need >= 2 points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            ss += r * r;
        }
        f.slope_stderr = std::sqrt(ss / double(n - 2) / sxx);
    }
    return f;
}

// Multiple linear regression by normal equations, columns of X are regressors.
std::vector<double> least_squares(const std::vector<std::vector<double>>& columns,
                                  std::span<const double> rhs);

// Eigenvalues (ascending) of a small dense symmetric matrix, cyclic Jacobi.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n);

// Solve a small dense SPD/symmetric system in place by LDL^T with partial pivot fallback.
std::vector<double> solve_dense(std::vector<double> a, int n, std::vector<double> b);

// Condition number estimate (2-norm, via Jacobi eigenvalues) of a small symmetric matrix.
double symmetric_condition(const std::vector<double>& a, int n);

inline double sqr(double x) { return x * x; }

}  // namespace concentra
