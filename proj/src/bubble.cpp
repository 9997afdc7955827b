#include "concentra/bubble.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "concentra/quadrature.hpp"
#include "concentra/util.hpp"

namespace concentra::bubble {

BubbleParams::BubbleParams(double delta_, std::vector<double> xi_, int n_)
    : delta(delta_), xi(std::move(xi_)), n(n_) {
    if (n < 3) throw std::invalid_argument("invalid-dimension: bubble requires n >= 3");
    if (!(delta > 0.0)) throw std::invalid_argument("invalid-parameter: delta must be positive");
    if (int(xi.size()) != n) throw std::invalid_argument("invalid-parameter: xi has wrong dimension");
}

double alpha_n(int n) {
    if (n < 3) throw std::invalid_argument("invalid-dimension: alpha_n requires n >= 3");
    return std::pow(double(n) * (n - 2), 0.25 * (n - 2));
}

double critical_p(int n) {
    if (n < 3) throw std::invalid_argument("invalid-dimension: p requires n >= 3");
    return 2.0 * n / (n - 2);
}

double value(const BubbleParams& b, std::span<const double> x) {
    const double r2 = dist2(x, b.xi);
    const double den = b.delta * b.delta + r2;
    return alpha_n(b.n) * std::pow(b.delta, 0.5 * (b.n - 2)) * std::pow(den, -0.5 * (b.n - 2));
}

double derivative(const BubbleParams& b, std::span<const double> x, int j) {
    if (j < 0 || j > b.n) throw std::out_of_range("invalid-index: derivative index in 0..n");
    const int n = b.n;
    const double a = alpha_n(n);
    const double r2 = dist2(x, b.xi);
    const double den = b.delta * b.delta + r2;
    if (j == 0)
        return a * 0.5 * (n - 2) * std::pow(b.delta, 0.5 * (n - 4)) * (r2 - b.delta * b.delta) *
               std::pow(den, -0.5 * n);
    return a * (n - 2) * std::pow(b.delta, 0.5 * (n - 2)) * (x[j - 1] - b.xi[j - 1]) *
           std::pow(den, -0.5 * n);
}

void gradient(const BubbleParams& b, std::span<const double> x, std::span<double> g) {
    const int n = b.n;
    const double a = alpha_n(n);
    const double r2 = dist2(x, b.xi);
    const double c = -a * (n - 2) * std::pow(b.delta, 0.5 * (n - 2)) *
                     std::pow(b.delta * b.delta + r2, -0.5 * n);
    for (int d = 0; d < n; ++d) g[d] = c * (x[d] - b.xi[d]);
}

double radial(const BubbleParams& b, double r) {
    const double den = b.delta * b.delta + r * r;
    return alpha_n(b.n) * std::pow(b.delta, 0.5 * (b.n - 2)) * std::pow(den, -0.5 * (b.n - 2));
}

double radial_derivative_r(const BubbleParams& b, double r) {
    const double den = b.delta * b.delta + r * r;
    return -alpha_n(b.n) * (b.n - 2) * std::pow(b.delta, 0.5 * (b.n - 2)) * r *
           std::pow(den, -0.5 * b.n);
}

namespace {

double cutoff(double r, const RadialCutoff& chi) {
    return chi.active ? quad::smooth_cutoff(r, chi.r0, chi.r1) : 1.0;
}

double radial_integral(const BubbleParams& b, double eta, const RadialCutoff& chi,
                       const std::function<double(double)>& f) {
    const double area = quad::unit_sphere_area(b.n);
    auto g = [&](double r) { return cutoff(r, chi) * f(r); };
    // Split at the bubble scale so the adaptive rule sees both regimes.
    const double mid = std::min(b.delta, eta);
    quad::Options opt;
    opt.rel_tol = 1e-12;
    double s = quad::integrate(g, 0.0, mid, opt);
    if (eta > mid) s += quad::integrate(g, mid, eta, opt);
    return area * s;
}

}  // namespace

double moment_power(const BubbleParams& b, double q, int k, double eta, const RadialCutoff& chi) {
    return radial_integral(b, eta, chi, [&](double r) {
        return std::pow(radial(b, r), q) * std::pow(r, b.n - 1 + k);
    });
}

double moment_grad2(const BubbleParams& b, int k, double eta, const RadialCutoff& chi) {
    return radial_integral(b, eta, chi, [&](double r) {
        return sqr(radial_derivative_r(b, r)) * std::pow(r, b.n - 1 + k);
    });
}

double moment_xdotgrad(const BubbleParams& b, double eta, const RadialCutoff& chi) {
    return radial_integral(b, eta, chi, [&](double r) {
        return radial_derivative_r(b, r) * std::pow(r, double(b.n));
    });
}

double moment_radial(const BubbleParams& b, const std::function<double(double)>& F, double eta,
                     const RadialCutoff& chi) {
    return radial_integral(b, eta, chi,
                           [&](double r) { return F(r) * std::pow(r, b.n - 1.0); });
}

double psi0_radial(const BubbleParams& b, double r) {
    const int n = b.n;
    const double den = b.delta * b.delta + r * r;
    return alpha_n(n) * 0.5 * (n - 2) * std::pow(b.delta, 0.5 * (n - 4)) *
           (r * r - b.delta * b.delta) * std::pow(den, -0.5 * n);
}

double psij_profile(const BubbleParams& b, double r) {
    const int n = b.n;
    const double den = b.delta * b.delta + r * r;
    return alpha_n(n) * (n - 2) * std::pow(b.delta, 0.5 * (n - 2)) * std::pow(den, -0.5 * n);
}

}  // namespace concentra::bubble
