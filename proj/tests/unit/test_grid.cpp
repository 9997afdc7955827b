#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "concentra/elliptic.hpp"
#include "concentra/grid.hpp"

using namespace concentra;
using fd::Discretization;

namespace {

std::shared_ptr<Discretization> unit_ball_disc(int n) {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::unit_ball());
    return Discretization::create(dom, geom::constant_weight(), n);
}

// Ground state of the radial Lane-Emden problem u'' + (2/r) u' + |u|^{p-2-eps} u = 0,
// u'(0)=0, u(1)=0, by shooting on the initial height. Independent oracle for Newton.
struct RadialShooting {
    double eps;
    double p = 6.0;

    // integrate to r=1, return u(1) for initial height mu
    double endpoint(double mu, std::vector<double>* profile = nullptr, int steps = 20000) const {
        double u = mu, v = 0.0;  // v = u'
        const double h = 1.0 / steps;
        auto acc = [&](double r, double uu, double vv) {
            const double f = std::pow(std::abs(uu), p - 2.0 - eps) * uu;
            if (r < 1e-12) return -f / 3.0;  // limit of u'' at the origin
            return -2.0 / r * vv - f;
        };
        if (profile) profile->assign(steps + 1, 0.0);
        if (profile) (*profile)[0] = u;
        for (int i = 0; i < steps; ++i) {
            const double r = i * h;
            const double k1u = v, k1v = acc(r, u, v);
            const double k2u = v + 0.5 * h * k1v, k2v = acc(r + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
            const double k3u = v + 0.5 * h * k2v, k3v = acc(r + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
            const double k4u = v + h * k3v, k4v = acc(r + h, u + h * k3u, v + h * k3v);
            u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
            v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
            if (profile) (*profile)[i + 1] = u;
        }
        return u;
    }

    double ground_state_height() const {
        // find mu with first zero exactly at r=1: u(1; mu) increases through 0 as mu decreases
        double lo = 1.0, hi = 40.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (endpoint(mid) > 0)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }
};

}  // namespace

TEST_CASE("constant-coefficient stencil far from the boundary") {
    auto disc = unit_ball_disc(33);
    const double h = disc->h();
    // apply to the indicator of the center node: diagonal 6/h^2, neighbors -1/h^2
    const auto& gg = disc->geom();
    const int mid = gg.node_at(16, 16, 16);
    REQUIRE(mid >= 0);
    std::vector<double> e(disc->size(), 0.0);
    e[mid] = 1.0;
    const auto ae = disc->apply(e);
    CHECK(ae[mid] == doctest::Approx(6.0 / (h * h)).epsilon(1e-13));
    const int nb = gg.node_at(17, 16, 16);
    CHECK(ae[nb] == doctest::Approx(-1.0 / (h * h)).epsilon(1e-13));
}

TEST_CASE("operator is exactly symmetric and an M-matrix at the boundary") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({2, 0, 0}, 1.0));
    auto disc = Discretization::create(dom, geom::monomial_weight(std::vector<int>{1}, *dom), 21);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    std::vector<double> u(disc->size()), v(disc->size());
    for (auto& x : u) x = gauss(rng);
    for (auto& x : v) x = gauss(rng);
    const auto au = disc->apply(u);
    const auto av = disc->apply(v);
    CHECK(dot(std::span<const double>(u), std::span<const double>(av)) ==
          doctest::Approx(dot(std::span<const double>(v), std::span<const double>(au)))
              .epsilon(1e-13));

    // A applied to the all-ones field is zero in the interior, >= 0 at cut nodes.
    std::vector<double> ones(disc->size(), 1.0);
    const auto a1 = disc->apply(ones);
    double min_val = 1e300;
    for (double x : a1) min_val = std::min(min_val, x);
    CHECK(min_val >= -1e-10);
}

TEST_CASE("torsion function of the unit ball: i_star(1)(0) = 1/6") {
    auto disc = unit_ball_disc(65);
    std::vector<double> one(disc->size(), 1.0);
    const auto v = disc->i_star(one);
    const double at0 = disc->interpolate(v.v, {0, 0, 0});
    CHECK(at0 == doctest::Approx(1.0 / 6.0).epsilon(6e-3));
    CHECK(std::abs(at0 - 1.0 / 6.0) < 1e-3);

    // u = 0 -> v = 0
    std::vector<double> zero(disc->size(), 0.0);
    const auto v0 = disc->i_star(zero);
    for (int i = 0; i < disc->size(); i += 997) CHECK(v0.v[i] == 0.0);
}

TEST_CASE("first Dirichlet eigenvalue of the ball is pi^2 within 2 percent") {
    auto disc = unit_ball_disc(65);
    std::vector<double> zero(disc->size(), 0.0);
    const auto ev = fd::linearized_spectrum(disc, zero, 0.0, 3);
    CHECK(std::abs(ev[0] - M_PI * M_PI) / (M_PI * M_PI) < 0.02);
    CHECK(ev[1] > ev[0]);
}

TEST_CASE("inverse consistency: i_star after apply returns the input") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({1.5, 0, 0}, 1.0));
    auto disc = Discretization::create(dom, geom::monomial_weight(std::vector<int>{1}, *dom), 25);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss;
    std::vector<double> u(disc->size());
    for (auto& x : u) x = gauss(rng);
    // w = A u, then solve A v = w: v == u to solver tolerance
    const auto w = disc->apply(u);
    const auto v = disc->solve(w, 1e-12);
    double num = 0, den = 0;
    for (int i = 0; i < disc->size(); ++i) {
        num += sqr(v[i] - u[i]);
        den += sqr(u[i]);
    }
    CHECK(std::sqrt(num / den) < 1e-8);
}

TEST_CASE("weighted inner product is symmetric positive definite") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({1.5, 0, 0}, 1.0));
    auto disc = Discretization::create(dom, geom::monomial_weight(std::vector<int>{1}, *dom), 17);
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss;
    std::vector<double> u(disc->size()), v(disc->size());
    for (auto& x : u) x = gauss(rng);
    for (auto& x : v) x = gauss(rng);
    CHECK(disc->inner(u, v) == doctest::Approx(disc->inner(v, u)).epsilon(1e-12));
    CHECK(disc->inner(u, u) > 0);
}

TEST_CASE("i_star continuity constant is stable under refinement") {
    // sup over random u of ||i*(u)|| / ||u||_{2n/(n+2)} on two grids.
    auto ratio_sup = [](int naxis) {
        auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({1.5, 0, 0}, 1.0));
        auto disc =
            Discretization::create(dom, geom::monomial_weight(std::vector<int>{1}, *dom), naxis);
        std::mt19937_64 rng(21);
        std::normal_distribution<double> gauss;
        double sup = 0;
        for (int s = 0; s < 8; ++s) {
            std::vector<double> u(disc->size());
            for (auto& x : u) x = gauss(rng);
            const auto v = disc->i_star(u);
            sup = std::max(sup, disc->norm(v.v) / disc->norm_Lr(u, 1.2));
        }
        return sup;
    };
    const double c1 = ratio_sup(17);
    const double c2 = ratio_sup(25);
    CHECK(c2 < 1.6 * c1);
    CHECK(c1 < 1.6 * c2);
}

TEST_CASE("newton: trivial start, warm restart, radial oracle at eps = 1") {
    auto disc = unit_ball_disc(65);

    // u0 = 0 is a fixed point: trivial-solution flag.
    auto res0 = fd::newton_solve(disc, 1.0, disc->zero_field());
    CHECK(res0.converged);
    CHECK(res0.trivial);

    // Strongly subcritical ground state, warm-started from the shooting profile.
    RadialShooting shoot{1.0};
    const double mu = shoot.ground_state_height();
    std::vector<double> prof;
    shoot.endpoint(mu, &prof);
    auto from_profile = [&](const std::shared_ptr<Discretization>& d) {
        return d->sample([&](const Vec3& x) {
            const double r = norm(x);
            return prof[std::min<std::size_t>(prof.size() - 1,
                                              std::size_t(std::lround(r * 20000)))];
        });
    };
    auto res = fd::newton_solve(disc, 1.0, from_profile(disc));
    CHECK(res.converged);
    CHECK(!res.trivial);

    // Warm restart from the exact discrete solution converges immediately.
    auto res2 = fd::newton_solve(disc, 1.0, res.u);
    CHECK(res2.converged);
    CHECK(res2.iterations <= 2);

    // Quadratic tail: last three residuals decrease monotonically.
    const auto& hist = res.residual_history;
    REQUIRE(hist.size() >= 3);
    for (std::size_t i = hist.size() - 2; i < hist.size(); ++i) CHECK(hist[i] < hist[i - 1]);

    // Mountain-pass character: smallest linearized eigenvalue negative at the solution.
    const auto ev = fd::linearized_spectrum(disc, res.u.v, 1.0, 2);
    CHECK(ev[0] < 0);

    // Profile accuracy: the peak error is O(h^2) with a large constant, so the 1%
    // sup-norm comparison against the 1-D oracle needs the fine grid.
    auto disc_fine = unit_ball_disc(129);
    auto res_fine = fd::newton_solve(disc_fine, 1.0, from_profile(disc_fine));
    CHECK(res_fine.converged);
    double worst = 0;
    for (int i = 0; i < disc_fine->size(); ++i) {
        const Vec3 x = disc_fine->geom().position(i);
        const double r = norm(x);
        const double oracle = prof[std::min<std::size_t>(prof.size() - 1,
                                                         std::size_t(std::lround(r * 20000)))];
        worst = std::max(worst, std::abs(res_fine.u.v[i] - oracle));
    }
    CHECK(worst / mu < 0.01);
}

TEST_CASE("symmetrized newton output is exactly reflection invariant") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({2, 0, 0}, 1.0));
    auto disc = Discretization::create(dom, geom::constant_weight(), 33);
    fd::ReflectionSet refl(disc->geom(), {{1, 0.0}, {2, 0.0}});
    // slightly asymmetric smooth bump; the symmetrization must still produce an exactly
    // mirror-symmetric solution. eps = 1.5 keeps the 33^3 grid clear of the spike fold.
    RadialShooting shoot{1.5};
    const double mu = shoot.ground_state_height();
    std::vector<double> prof;
    shoot.endpoint(mu, &prof);
    auto u0 = disc->sample([&](const Vec3& x) {
        const Vec3 c{2.0, 0.02, -0.015};
        const double r = norm(x - c);
        return prof[std::min<std::size_t>(prof.size() - 1, std::size_t(std::lround(r * 20000)))];
    });
    auto res = fd::newton_solve(disc, 1.5, u0, &refl);
    CHECK(res.converged);
    const auto& gg = disc->geom();
    for (int i = 0; i < disc->size(); i += 37) {
        const auto c = gg.ijk[i];
        const int j = gg.node_at(c[0], gg.ny - 1 - c[1], c[2]);
        REQUIRE(j >= 0);
        CHECK(res.u.v[i] == res.u.v[j]);
    }
}

TEST_CASE("field serialization round trip and profile export") {
    auto disc = unit_ball_disc(17);
    auto f = disc->sample([](const Vec3& x) { return x[0] + 2 * x[1] * x[2]; });
    const auto tmp = std::filesystem::temp_directory_path() / "concentra_test_field.bin";
    fd::save_field(f, tmp.string(), "demo");
    std::string header;
    const auto v = fd::load_field(tmp.string(), &header);
    REQUIRE(v.size() == f.v.size());
    for (std::size_t i = 0; i < v.size(); i += 101) CHECK(v[i] == f.v[i]);
    CHECK(header.find("demo") != std::string::npos);

    const auto csv = std::filesystem::temp_directory_path() / "concentra_test_profile.csv";
    fd::export_line_profile(f, {0, 0, 0}, 0, csv.string());
    CHECK(std::filesystem::file_size(csv) > 0);
}

TEST_CASE("minres solves a symmetric indefinite system") {
    // small dense symmetric indefinite matrix embedded as an operator
    const int n = 40;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    std::vector<double> M(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = gauss(rng) / std::sqrt(n);
            M[i * n + j] = v;
            M[j * n + i] = v;
        }
    for (int i = 0; i < n; ++i) M[i * n + i] += (i % 2 == 0 ? 2.0 : -2.0);
    fd::LinOp op = [&](std::span<const double> x, std::span<double> y) {
        for (int i = 0; i < n; ++i) {
            double s = 0;
            for (int j = 0; j < n; ++j) s += M[i * n + j] * x[j];
            y[i] = s;
        }
    };
    std::vector<double> b(n), x;
    for (auto& v : b) v = gauss(rng);
    auto rep = fd::minres(op, b, x, 1e-12, 500);
    CHECK(rep.converged);
    std::vector<double> ax(n);
    op(x, ax);
    double err = 0;
    for (int i = 0; i < n; ++i) err += sqr(ax[i] - b[i]);
    CHECK(std::sqrt(err) < 1e-9);
}
