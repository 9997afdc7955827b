#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "concentra/ansatz.hpp"
#include "concentra/green.hpp"

using namespace concentra;
using ansatz::ConcentrationConfig;
using ansatz::Mode;

namespace {

struct Setup {
    std::shared_ptr<geom::DomainModel> dom;
    std::shared_ptr<fd::Discretization> disc;
};

Setup shifted_ball(int n) {
    Setup s;
    s.dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({1.5, 0, 0}, 1.0));
    s.disc = fd::Discretization::create(s.dom, geom::monomial_weight(std::vector<int>{1}, *s.dom), n);
    return s;
}

ConcentrationConfig single_peak(double d = 1.0, double t = 1.0) {
    ConcentrationConfig cc;
    cc.mode = Mode::Separated;
    cc.anchors = {{0.5, 0, 0}};
    cc.d = {d};
    cc.t = {t};
    cc.signs = {0};
    return cc;
}

}  // namespace

TEST_CASE("configuration invariants") {
    auto dom = geom::DomainModel::ball({1.5, 0, 0}, 1.0);
    ConcentrationConfig cc = single_peak();
    CHECK_NOTHROW(cc.validate(dom));

    ConcentrationConfig tower;
    tower.mode = Mode::Tower;
    tower.anchors = {{0.5, 0, 0}};
    tower.d = {1.0, 1.0};
    tower.t = {2.0, 1.0};  // not increasing
    CHECK_THROWS_WITH_AS(tower.validate(dom), doctest::Contains("invalid-configuration"),
                         std::invalid_argument);
    tower.t = {1.0, 2.0};
    CHECK_NOTHROW(tower.validate(dom));

    ConcentrationConfig dup;
    dup.mode = Mode::Separated;
    dup.anchors = {{0.5, 0, 0}, {0.5, 0, 0}};
    dup.d = {1, 1};
    dup.t = {1, 1};
    dup.signs = {0, 1};
    CHECK_THROWS_WITH_AS(dup.validate(dom), doctest::Contains("pairwise distinct"),
                         std::invalid_argument);
}

TEST_CASE("build_ansatz: single bubble gives V = PU and the n=3 scaling") {
    auto s = shifted_ball(25);
    const double eps = 0.2;
    auto st = ansatz::build_ansatz(s.disc, single_peak(1.3, 0.8), eps);
    // delta = eps^2 d for n = 3
    CHECK(st.bubbles[0].params.delta == doctest::Approx(eps * eps * 1.3).epsilon(1e-13));
    // V equals the projected bubble exactly
    for (int i = 0; i < s.disc->size(); i += 41)
        CHECK(st.V.v[i] == doctest::Approx(st.proj[0].pu.v[i]).epsilon(1e-14));
    // kernel dimension kappa (n+1)
    CHECK(st.kernel_size() == 4);
    CHECK(st.gram_condition < 1e10);

    // center placement xi = s + eps t nu
    CHECK(st.bubbles[0].params.xi[0] == doctest::Approx(0.5 + eps * 0.8).epsilon(1e-12));

    // eps too large pushes xi out of Omega through the far side
    ConcentrationConfig far = single_peak(1.0, 1.0);
    CHECK_THROWS_WITH_AS(ansatz::build_ansatz(s.disc, far, 2.5),
                         doctest::Contains("invalid-configuration"), std::invalid_argument);
}

TEST_CASE("projector: annihilates the span, fixes the complement, idempotent") {
    auto s = shifted_ball(25);
    auto st = ansatz::build_ansatz(s.disc, single_peak(), 0.3);

    // w in the kernel span projects to ~0
    fd::GridField w = s.disc->zero_field();
    for (int m = 0; m < st.kernel_size(); ++m)
        for (int i = 0; i < s.disc->size(); ++i) w.v[i] += (m + 1) * st.kernel[m].v[i];
    const double wn = s.disc->norm(w.v);
    auto pw = ansatz::project_out_kernel(st, w);
    CHECK(s.disc->norm(pw.v) < 1e-9 * wn);

    // a generic field: projection is orthogonal and idempotent
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    fd::GridField g = s.disc->zero_field();
    for (auto& v : g.v) v = gauss(rng);
    auto pg = ansatz::project_out_kernel(st, g);
    for (int m = 0; m < st.kernel_size(); ++m)
        CHECK(std::abs(s.disc->inner(pg.v, st.kernel[m].v)) < 1e-10 * s.disc->norm(g.v));
    auto pg2 = ansatz::project_out_kernel(st, pg);
    double diff = 0, den = 0;
    for (int i = 0; i < s.disc->size(); ++i) {
        diff += sqr(pg2.v[i] - pg.v[i]);
        den += sqr(pg.v[i]);
    }
    CHECK(std::sqrt(diff / den) < 1e-10);

    // an already-orthogonal field is returned unchanged
    auto pg3 = ansatz::project_out_kernel(st, pg);
    for (int i = 0; i < s.disc->size(); i += 53)
        CHECK(pg3.v[i] == doctest::Approx(pg.v[i]).epsilon(1e-9));
}

TEST_CASE("sandwich and projected-bubble positivity (cru1 on the exact ball)") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::unit_ball());
    auto disc = fd::Discretization::create(dom, geom::constant_weight(), 49);
    const double delta = 0.05;
    const Vec3 xi{0.55, 0, 0};
    bubble::BubbleParams bp(delta, {xi[0], xi[1], xi[2]}, 3);
    auto pb = fd::project_bubble(disc, bp);
    const double h = disc->h();
    double viol_low = 0, viol_up = 0;
    for (int i = 0; i < disc->size(); ++i) {
        const Vec3 x = disc->geom().position(i);
        const double upper = bubble::alpha_n(3) * std::sqrt(delta) *
                             green::regular_part_ball({x.data(), 3}, {xi.data(), 3}, 3);
        viol_low = std::max(viol_low, -pb.harmonic.v[i]);
        viol_up = std::max(viol_up, pb.harmonic.v[i] - upper);
        CHECK(pb.pu.v[i] <= pb.u_samples.v[i] + 1e-12);
    }
    CHECK(viol_low <= 0.0);          // exact discrete maximum principle
    CHECK(viol_up <= 2 * h * h);     // cru1 upper bound within discretization tolerance
}

TEST_CASE("residual of an exact discrete solution is at solver tolerance") {
    // Use the unweighted operator: its strongly subcritical ground state is centered and
    // Newton-tame (the weighted one slides toward the boundary, which is precisely the
    // concentration phenomenon, not smoke-test material).
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({1.5, 0, 0}, 1.0));
    auto disc = fd::Discretization::create(dom, geom::constant_weight(), 33);
    auto u0 = disc->sample([&](const Vec3& x) {
        const Vec3 c{1.5, 0, 0};
        return 2.5 * std::max(0.0, 1.0 - dot(x - c, x - c));
    });
    auto res = fd::newton_solve(disc, 1.5, u0);
    REQUIRE(res.converged);
    REQUIRE(!res.trivial);
    ansatz::ConcentrationConfig cc = single_peak();
    auto st = ansatz::build_ansatz(disc, cc, 1.5);
    const double rn = ansatz::discrete_residual_norm(st, res.u.v);
    CHECK(rn < 1e-6 * disc->norm(res.u.v));
}

TEST_CASE("residual responds continuously to d perturbations") {
    auto s = shifted_ball(33);
    auto st1 = ansatz::build_ansatz(s.disc, single_peak(1.0, 1.0), 0.2);
    auto st2 = ansatz::build_ansatz(s.disc, single_peak(1.01, 1.0), 0.2);
    const double r1 = ansatz::residual_norm(st1);
    const double r2 = ansatz::residual_norm(st2);
    CHECK(r2 < 10 * r1);
    CHECK(r1 < 10 * r2);
}

TEST_CASE("solve_correction: orthogonality and the corrected equation") {
    auto s = shifted_ball(33);
    auto st = ansatz::build_ansatz(s.disc, single_peak(1.0, 1.0), 0.16);
    const auto corr = ansatz::solve_correction(st);
    CHECK(corr.converged);
    CHECK(corr.max_orthogonality_defect < 1e-9);
    CHECK(corr.final_residual < 1e-8 * std::max(1.0, s.disc->norm(st.V.v)));
    CHECK(corr.norm > 0);
    CHECK(corr.norm < s.disc->norm(st.V.v));
}

TEST_CASE("coercivity: positive with projection, collapses without") {
    auto s = shifted_ball(33);
    auto st = ansatz::build_ansatz(s.disc, single_peak(6.0, 1.0), 0.25);
    const double with_proj = ansatz::coercivity_estimate(st, true);
    const double without = ansatz::coercivity_estimate(st, false);
    CHECK(with_proj > 0);
    CHECK(without < with_proj);
}

TEST_CASE("symmetric tower: V and the correction inherit the reflections") {
    auto dom = std::make_shared<geom::DomainModel>(geom::DomainModel::ball({2, 0, 0}, 1.0));
    auto disc = fd::Discretization::create(dom, geom::monomial_weight(std::vector<int>{1}, *dom), 33);
    fd::ReflectionSet refl(disc->geom(), {{1, 0.0}, {2, 0.0}});
    ConcentrationConfig cc;
    cc.mode = Mode::Tower;
    cc.anchors = {{1.0, 0, 0}};
    cc.d = {1.0, 0.8};
    cc.t = {0.8, 1.8};
    auto st = ansatz::build_ansatz(disc, cc, 0.08, &refl);
    CHECK(st.kernel_size() == 8);
    // signs alternate (+, -)
    CHECK(st.bubbles[0].sign == doctest::Approx(1.0));
    CHECK(st.bubbles[1].sign == doctest::Approx(-1.0));
    const auto& gg = disc->geom();
    for (int i = 0; i < disc->size(); i += 29) {
        const auto c = gg.ijk[i];
        const int j = gg.node_at(c[0], gg.ny - 1 - c[1], c[2]);
        REQUIRE(j >= 0);
        CHECK(st.V.v[i] == doctest::Approx(st.V.v[j]).epsilon(1e-12));
    }
    const auto corr = ansatz::solve_correction(st);
    for (int i = 0; i < disc->size(); i += 29) {
        const auto c = gg.ijk[i];
        const int j = gg.node_at(c[0], gg.ny - 1 - c[1], c[2]);
        CHECK(corr.phi.v[i] == doctest::Approx(corr.phi.v[j]).epsilon(1e-10));
    }
}

TEST_CASE("two-level energy against the direct grid energy on a resolved configuration") {
    // The two evaluators overlap in validity for bubbles resolved on the grid yet still
    // well separated from the boundary: delta = 4.4h, delta/offset = 0.3. The direct
    // quadrature itself carries O((h/delta)^2) error, so the comparison is coarse.
    auto s = shifted_ball(65);
    auto st = ansatz::build_ansatz(s.disc, single_peak(0.4, 0.8), 0.6);
    REQUIRE(!st.resolution_limited);
    fd::GridField phi = s.disc->zero_field();
    const double j_two_level = ansatz::reduced_energy_numeric(st, phi);
    std::vector<double> u = st.V.v;
    const double j_direct = ansatz::energy_direct(st, u);
    CHECK(j_two_level == doctest::Approx(j_direct).epsilon(0.05));

    // zero field: J = 0
    std::vector<double> zero(s.disc->size(), 0.0);
    CHECK(ansatz::energy_direct(st, zero) == doctest::Approx(0.0));
}

TEST_CASE("sign flip leaves the energy unchanged") {
    auto s = shifted_ball(33);
    auto cc = single_peak(1.2, 1.0);
    auto st_plus = ansatz::build_ansatz(s.disc, cc, 0.4);
    cc.signs = {1};
    auto st_minus = ansatz::build_ansatz(s.disc, cc, 0.4);
    fd::GridField phi = s.disc->zero_field();
    CHECK(ansatz::reduced_energy_numeric(st_plus, phi) ==
          doctest::Approx(ansatz::reduced_energy_numeric(st_minus, phi)).epsilon(1e-10));
}
