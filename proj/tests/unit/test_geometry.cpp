#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "concentra/geometry.hpp"
#include "concentra/quadrature.hpp"

using namespace concentra;
using geom::DomainModel;

TEST_CASE("unit ball collar data") {
    auto dom = DomainModel::unit_ball();
    const auto c = dom.collar_data({0.9, 0, 0});
    CHECK(c.d_x == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(c.p_x[0] == doctest::Approx(1.0));
    CHECK(c.nu[0] == doctest::Approx(-1.0));
    CHECK(c.x_bar[0] == doctest::Approx(1.1));
    const auto c2 = dom.collar_data({0, 0, 0.95});
    CHECK(c2.x_bar[2] == doctest::Approx(1.05));

    CHECK_THROWS_WITH_AS(dom.collar_data({1.5, 0, 0}), doctest::Contains("outside-domain"),
                         std::domain_error);
    CHECK_THROWS_WITH_AS(dom.collar_data({0.1, 0, 0}), doctest::Contains("outside-collar"),
                         std::domain_error);
}

TEST_CASE("collar reflection isometry and projection idempotence") {
    auto dom = DomainModel::ball({1.5, -0.3, 0.2}, 0.8);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> uni(0.01, 0.3);
    for (int s = 0; s < 50; ++s) {
        Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
        dir = (1.0 / norm(dir)) * dir;
        const double d = uni(rng) * dom.eta();
        const Vec3 x = dom.center() + (dom.radius() - d) * dir;
        const auto c = dom.collar_data(x);
        CHECK(norm(c.x_bar - c.p_x) == doctest::Approx(c.d_x).epsilon(1e-10));
        CHECK(norm(c.p_x - x) == doctest::Approx(c.d_x).epsilon(1e-10));
        // p(p_x + s nu) = p_x for s in (0, 2 eta)
        const Vec3 inner = c.p_x + (0.5 * dom.eta()) * c.nu;
        const auto ci = dom.collar_data(inner);
        CHECK(norm(ci.p_x - c.p_x) < 1e-9);
        // reflection involution: reflecting x_bar recovers x (exact on balls)
        const Vec3 back = c.x_bar - 2.0 * (-c.d_x) * c.nu;
        CHECK(norm(back - x) < 1e-10);
    }
}

TEST_CASE("rounded box collar sanity") {
    auto dom = DomainModel::rounded_box({0.5, -1, -1}, {2.5, 1, 1}, 0.2);
    CHECK(dom.contains({1.5, 0, 0}));
    CHECK(!dom.contains({0.4, 0, 0}));
    const auto c = dom.collar_data({0.6, 0, 0});
    CHECK(c.d_x == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(c.nu[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(c.p_x[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("critical exponent") {
    CHECK(geom::critical_exponent(5, 2) == doctest::Approx(6.0));
    CHECK(geom::critical_exponent(6, 1) == doctest::Approx(10.0 / 3.0));
    CHECK(geom::critical_exponent(7, 0) == doctest::Approx(14.0 / 5.0));
    CHECK_THROWS_WITH_AS(geom::critical_exponent(4, 2), doctest::Contains("invalid-codimension"),
                         std::invalid_argument);
    // Consistency with p = 2n/(n-2) at n = N-k.
    for (int N = 5; N <= 9; ++N)
        for (int k = 0; k <= N - 3; ++k) {
            const int n = N - k;
            CHECK(geom::critical_exponent(N, k) == doctest::Approx(2.0 * n / (n - 2)));
        }
}

TEST_CASE("monomial weight: values, gradient, hessian, degeneracy") {
    auto dom = DomainModel::ball({2, 3, 0}, 0.5);
    auto w = geom::monomial_weight(std::vector<int>{1, 1}, dom);
    CHECK(w.value({2, 3, 0.1}) == doctest::Approx(6.0));
    const auto g = w.gradient({2, 3, 0.1});
    CHECK(g[0] == doctest::Approx(3.0));
    CHECK(g[1] == doctest::Approx(2.0));
    CHECK(g[2] == doctest::Approx(0.0));
    const auto h = w.hessian({2, 3, 0.1});
    CHECK(h[1] == doctest::Approx(1.0));  // d2/dx1 dx2
    CHECK(h[0] == doctest::Approx(0.0));

    auto dom_bad = DomainModel::unit_ball();
    CHECK_THROWS_WITH_AS(geom::monomial_weight(std::vector<int>{1}, dom_bad),
                         doctest::Contains("weight-degenerate"), std::domain_error);

    // m=1, k=1: a = x1, grad = e1.
    auto dom1 = DomainModel::ball({2, 0, 0}, 1.0);
    auto w1 = geom::monomial_weight(std::vector<int>{1}, dom1);
    CHECK(w1.value({1.7, 0.2, -0.1}) == doctest::Approx(1.7));
    CHECK(w1.gradient({1.7, 0.2, -0.1})[0] == doctest::Approx(1.0));
}

TEST_CASE("symmetry spec invariants") {
    CHECK_NOTHROW(geom::SymmetrySpec({1, 1}, 5));
    CHECK_THROWS_AS(geom::SymmetrySpec({3}, 5), std::invalid_argument);   // k > N-3
    CHECK_THROWS_AS(geom::SymmetrySpec({0}, 5), std::invalid_argument);   // k_i >= 1
    geom::SymmetrySpec spec({2}, 5);
    CHECK(spec.n() == 3);
    CHECK(spec.m() == 1);
}

TEST_CASE("lift_to_invariant: rotation invariance and constants") {
    auto dom = DomainModel::ball({2, 0, 0}, 1.0);
    geom::SymmetrySpec spec({2}, 5);
    auto u = [](std::span<const double> x) { return x[0] * x[0] + 0.5 * x[2]; };
    // y = (y^1, z) with y^1 in R^3, z in R^2.
    std::vector<double> y = {1.2, 0.9, 0.6, 0.3, -0.2};
    const double v0 = geom::lift_to_invariant(u, y, spec, dom);
    // rotate y^1 about the z-axis of its own block
    const double cth = std::cos(0.7), sth = std::sin(0.7);
    std::vector<double> yr = {cth * 1.2 - sth * 0.9, sth * 1.2 + cth * 0.9, 0.6, 0.3, -0.2};
    CHECK(geom::lift_to_invariant(u, yr, spec, dom) == doctest::Approx(v0).epsilon(1e-13));

    auto one = [](std::span<const double>) { return 1.0; };
    CHECK(geom::lift_to_invariant(one, y, spec, dom) == doctest::Approx(1.0));

    std::vector<double> outside = {10.0, 0, 0, 0, 0};
    CHECK_THROWS_WITH_AS(geom::lift_to_invariant(u, outside, spec, dom),
                         doctest::Contains("outside-domain"), std::domain_error);
}

TEST_CASE("sphere areas") {
    CHECK(quad::sphere_area(1) == doctest::Approx(2 * M_PI));          // S^1
    CHECK(quad::sphere_area(2) == doctest::Approx(4 * M_PI));          // S^2
    CHECK(quad::unit_sphere_area(3) == doctest::Approx(4 * M_PI));     // S^2 in R^3
}

TEST_CASE("declared reflection symmetry checked by sampling") {
    auto dom = DomainModel::ball({2, 0, 0}, 1.0);
    CHECK(dom.check_reflection_symmetry(1, 0.0, 200, 5));
    CHECK(dom.check_reflection_symmetry(2, 0.0, 200, 6));
    CHECK(!dom.check_reflection_symmetry(0, 0.0, 200, 7));
}
