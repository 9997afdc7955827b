#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "concentra/bubble.hpp"
#include "concentra/quadrature.hpp"

using namespace concentra;
using bubble::BubbleParams;

TEST_CASE("alpha_n closed forms") {
    // Arbitrary-precision evaluations of [n(n-2)]^{(n-2)/4}.
    CHECK(bubble::alpha_n(3) == doctest::Approx(std::pow(3.0, 0.25)).epsilon(1e-14));
    CHECK(bubble::alpha_n(3) == doctest::Approx(1.3160740129524924).epsilon(1e-12));
    CHECK(bubble::alpha_n(4) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-14));
    CHECK(bubble::alpha_n(6) == doctest::Approx(24.0).epsilon(1e-14));
    CHECK_THROWS_WITH_AS(bubble::alpha_n(2), doctest::Contains("invalid-dimension"),
                         std::invalid_argument);
}

TEST_CASE("bubble value: center, sample point, scaling identity") {
    BubbleParams b(1.0, {0, 0, 0}, 3);
    const double x1[3] = {1, 0, 0};
    CHECK(bubble::value(b, std::span<const double>(x1, 3)) ==
          doctest::Approx(std::pow(3.0, 0.25) / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(bubble::value(b, std::span<const double>(x1, 3)) ==
          doctest::Approx(0.930605).epsilon(1e-6));

    // Radial maximum at the center: alpha_n delta^{-(n-2)/2}.
    BubbleParams b2(0.3, {0.2, -0.1, 0.5}, 3);
    const double xc[3] = {0.2, -0.1, 0.5};
    CHECK(bubble::value(b2, std::span<const double>(xc, 3)) ==
          doctest::Approx(bubble::alpha_n(3) * std::pow(0.3, -0.5)).epsilon(1e-14));

    // U_{delta,xi}(x) = delta^{-(n-2)/2} U_{1,0}((x-xi)/delta).
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int n : {3, 4, 5}) {
        std::vector<double> xi(n), x(n), y(n);
        for (int d = 0; d < n; ++d) {
            xi[d] = uni(rng);
            x[d] = uni(rng);
        }
        const double delta = 0.37;
        for (int d = 0; d < n; ++d) y[d] = (x[d] - xi[d]) / delta;
        BubbleParams bd(delta, xi, n);
        BubbleParams b1(1.0, std::vector<double>(n, 0.0), n);
        CHECK(bubble::value(bd, x) ==
              doctest::Approx(std::pow(delta, -0.5 * (n - 2)) * bubble::value(b1, y))
                  .epsilon(1e-13));
    }
}

TEST_CASE("bubble derivatives: closed form against finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-0.8, 0.8);
    for (int n : {3, 4, 6}) {
        std::vector<double> xi(n), x(n);
        for (int d = 0; d < n; ++d) {
            xi[d] = 0.3 * uni(rng);
            x[d] = uni(rng);
        }
        const double delta = 0.45;
        BubbleParams b(delta, xi, n);
        const double step = 1e-5;
        for (int j = 0; j <= n; ++j) {
            double fd;
            if (j == 0) {
                BubbleParams bp(delta + step, xi, n), bm(delta - step, xi, n);
                fd = (bubble::value(bp, x) - bubble::value(bm, x)) / (2 * step);
            } else {
                auto xip = xi, xim = xi;
                xip[j - 1] += step;
                xim[j - 1] -= step;
                BubbleParams bp(delta, xip, n), bm(delta, xim, n);
                fd = (bubble::value(bp, x) - bubble::value(bm, x)) / (2 * step);
            }
            const double cf = bubble::derivative(b, x, j);
            CHECK(cf == doctest::Approx(fd).epsilon(1e-6));
        }
        // Spatial gradient = -psi^j in the xi slots.
        std::vector<double> g(n);
        bubble::gradient(b, x, g);
        for (int d = 0; d < n; ++d)
            CHECK(g[d] == doctest::Approx(-bubble::derivative(b, x, d + 1)).epsilon(1e-13));
    }
}

TEST_CASE("bubble derivative special points") {
    BubbleParams b(0.7, {0.1, 0.2, 0.3}, 3);
    const double xc[3] = {0.1, 0.2, 0.3};
    for (int j = 1; j <= 3; ++j)
        CHECK(bubble::derivative(b, std::span<const double>(xc, 3), j) == doctest::Approx(0.0));
    // j = 0 at x = xi: -alpha_n (n-2)/2 delta^{-n/2}.
    CHECK(bubble::derivative(b, std::span<const double>(xc, 3), 0) ==
          doctest::Approx(-bubble::alpha_n(3) * 0.5 * std::pow(0.7, -1.5)).epsilon(1e-13));
    CHECK_THROWS_WITH_AS(bubble::derivative(b, std::span<const double>(xc, 3), 4),
                         doctest::Contains("invalid-index"), std::out_of_range);
}

TEST_CASE("pointwise PDE and linearized-kernel identities on a local stencil") {
    // -Lap U = U^{p-1} and -Lap psi^j = (p-1) U^{p-2} psi^j, discretized at second order:
    // the h-residual must shrink by ~4 when h halves.
    const int n = 3;
    BubbleParams b(1.0, {0, 0, 0}, n);
    const double p = bubble::critical_p(n);
    auto lap_res = [&](double h, auto&& f, auto&& rhs) {
        double worst = 0.0;
        const double pts[4][3] = {{0.3, 0.1, -0.2}, {0.0, 0.0, 0.0}, {0.7, -0.4, 0.5}, {1.2, 0.3, 0.1}};
        for (const auto& q : pts) {
            double lap = 0.0;
            const double f0 = f(std::span<const double>(q, 3));
            for (int d = 0; d < 3; ++d) {
                double qp[3] = {q[0], q[1], q[2]}, qm[3] = {q[0], q[1], q[2]};
                qp[d] += h;
                qm[d] -= h;
                lap += (f(std::span<const double>(qp, 3)) - 2 * f0 +
                        f(std::span<const double>(qm, 3))) /
                       (h * h);
            }
            worst = std::max(worst, std::abs(-lap - rhs(std::span<const double>(q, 3))));
        }
        return worst;
    };
    auto U = [&](std::span<const double> x) { return bubble::value(b, x); };
    auto fU = [&](std::span<const double> x) { return std::pow(bubble::value(b, x), p - 1); };
    const double r1 = lap_res(1e-2, U, fU);
    const double r2 = lap_res(5e-3, U, fU);
    CHECK(r2 < 0.35 * r1);  // O(h^2)

    for (int j = 0; j <= n; ++j) {
        auto psi = [&](std::span<const double> x) { return bubble::derivative(b, x, j); };
        auto rhs = [&](std::span<const double> x) {
            return (p - 1) * std::pow(bubble::value(b, x), p - 2) * bubble::derivative(b, x, j);
        };
        const double s1 = lap_res(1e-2, psi, rhs);
        const double s2 = lap_res(5e-3, psi, rhs);
        CHECK(s2 < 0.35 * s1);
    }
}

TEST_CASE("radial moments against semi-infinite closed forms") {
    // For eta -> infinity and q = p: M0 = gamma1 / alpha_n^? ... use directly computable
    // 1-D values instead: int_0^inf r^2 (1+r^2)^{-3} dr = pi/16 and
    // int_0^inf r^2 (1+r^2)^{-5/2} dr = 1/3.
    quad::Options opt;
    const double i1 = quad::integrate_semi_infinite(
        [](double r) { return r * r * std::pow(1 + r * r, -3.0); }, 0.0, opt);
    CHECK(i1 == doctest::Approx(M_PI / 16.0).epsilon(1e-11));
    const double i2 = quad::integrate_semi_infinite(
        [](double r) { return r * r * std::pow(1 + r * r, -2.5); }, 0.0, opt);
    CHECK(i2 == doctest::Approx(1.0 / 3.0).epsilon(1e-11));

    // moment_power with a large eta approaches the delta-scaled whole-space value; the
    // tail beyond eta contributes O((delta/eta)^2) relative.
    BubbleParams b(0.05, {0, 0, 0}, 3);
    const double p = 6.0;
    const double m0 = bubble::moment_power(b, p - 1, 0, 50.0);
    // int U^{p-1} = alpha^{p-1} delta^{(n-2)/2} * 4pi * int r^2 (1+r^2)^{-5/2} dr
    const double expect = std::pow(bubble::alpha_n(3), p - 1) * std::sqrt(0.05) * 4 * M_PI / 3.0;
    CHECK(m0 == doctest::Approx(expect).epsilon(2e-5));
}

TEST_CASE("gauss-legendre rule integrates polynomials exactly") {
    const auto rule = quad::gauss_legendre(12);
    double s = 0;
    for (int i = 0; i < 12; ++i) s += rule.w[i] * std::pow(rule.x[i], 10);
    CHECK(s == doctest::Approx(2.0 / 11.0).epsilon(1e-13));
}
