// Two-level evaluation of J_eps(V + phi): 1-D radial moments capture the closed-form
// bubble cores, grid quadrature handles the smooth remainder, and sphere quadrature
// supplies the boundary terms of the integration by parts.
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "concentra/ansatz.hpp"
#include "concentra/quadrature.hpp"

namespace concentra::ansatz {

namespace {

using bubble::BubbleParams;

struct PeakMoments {
    double r0 = 0, r1 = 0;  // cutoff radii
    double M0_pe = 0, M2_pe = 0;      // U^{p-eps}
    double M0_p1e = 0, M2_p1e = 0;    // U^{p-1-eps}
    double M0_p2e = 0, M2_p2e = 0;    // U^{p-2-eps}
    double M0_p1 = 0, M2_p1 = 0;      // U^{p-1}
    double G0 = 0, G2 = 0;            // |grad U|^2
    double A1 = 0;                    // <x, grad U>
};

struct SmoothProbe {
    double value = 0;
    Vec3 grad{};
    double lap = 0;
};

// Value/gradient/Laplacian of a grid field at an off-node point, by trilinear sampling
// at spacing 2h.
SmoothProbe probe_field(const fd::Discretization& disc, std::span<const double> v,
                        const Vec3& xi) {
    const double hs = 2.0 * disc.h();
    SmoothProbe out;
    out.value = disc.interpolate(v, xi);
    for (int d = 0; d < 3; ++d) {
        Vec3 xp = xi, xm = xi;
        xp[d] += hs;
        xm[d] -= hs;
        const double vp = disc.interpolate(v, xp);
        const double vm = disc.interpolate(v, xm);
        out.grad[d] = (vp - vm) / (2 * hs);
        out.lap += (vp - 2 * out.value + vm) / (hs * hs);
    }
    return out;
}

double chi_weight(const Vec3& x, const Vec3& xi, double r0, double r1) {
    return quad::smooth_cutoff(norm(x - xi), r0, r1);
}

}  // namespace

double energy_direct(const AnsatzState& st, std::span<const double> u) {
    const auto& disc = *st.disc;
    const double h = disc.h();
    const auto au = disc.apply(u);
    const double dirichlet = h * h * h * dot(u, au);
    double pot = 0.0;
    const auto& a = disc.node_weight();
    for (int i = 0; i < disc.size(); ++i)
        pot += a[i] * std::pow(std::abs(u[i]), st.p - st.eps) * disc.geom().vol_weight[i];
    return 0.5 * dirichlet - pot / (st.p - st.eps);
}

double reduced_energy_numeric(const AnsatzState& st, const fd::GridField& phi,
                              EnergyBreakdown* breakdown) {
    const auto& disc = *st.disc;
    const auto& dom = *disc.geom().domain;
    if (dom.kind() != geom::DomainKind::UnitBall && dom.kind() != geom::DomainKind::Ball)
        throw std::invalid_argument("invalid-domain: reduced_energy_numeric requires a ball domain");
    const int n = disc.size();
    const int k = st.config.peaks();
    const double p = st.p, eps = st.eps;
    const auto& weight = disc.weight();

    // Trivial field: both integrals vanish.
    // w = phi - sum_i sign_i E_i (grid-smooth part of u = S + w).
    std::vector<double> w(n, 0.0);
    if (!phi.v.empty())
        for (int i = 0; i < n; ++i) w[i] = phi.v[i];
    for (int b = 0; b < k; ++b) {
        const double sg = st.bubbles[b].sign;
        for (int i = 0; i < n; ++i) w[i] -= sg * st.proj[b].harmonic.v[i];
    }

    // Cutoff radii and radial moments per peak.
    std::vector<PeakMoments> mom(k);
    for (int b = 0; b < k; ++b) {
        double sep = 1e300;
        const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                      st.bubbles[b].params.xi[2]};
        for (int c = 0; c < k; ++c) {
            if (c == b) continue;
            const Vec3 xj{st.bubbles[c].params.xi[0], st.bubbles[c].params.xi[1],
                          st.bubbles[c].params.xi[2]};
            sep = std::min(sep, 0.5 * norm(xi - xj));
        }
        const double r1 = 0.95 * std::min(st.bubbles[b].dist_bnd, sep);
        PeakMoments& m = mom[b];
        m.r1 = r1;
        m.r0 = 0.5 * r1;
        bubble::RadialCutoff chi{m.r0, m.r1, true};
        const auto& bp = st.bubbles[b].params;
        m.M0_pe = bubble::moment_power(bp, p - eps, 0, r1, chi);
        m.M2_pe = bubble::moment_power(bp, p - eps, 2, r1, chi);
        m.M0_p1e = bubble::moment_power(bp, p - 1 - eps, 0, r1, chi);
        m.M2_p1e = bubble::moment_power(bp, p - 1 - eps, 2, r1, chi);
        m.M0_p2e = bubble::moment_power(bp, p - 2 - eps, 0, r1, chi);
        m.M2_p2e = bubble::moment_power(bp, p - 2 - eps, 2, r1, chi);
        m.M0_p1 = bubble::moment_power(bp, p - 1, 0, r1, chi);
        m.M2_p1 = bubble::moment_power(bp, p - 1, 2, r1, chi);
        m.G0 = bubble::moment_grad2(bp, 0, r1, chi);
        m.G2 = bubble::moment_grad2(bp, 2, r1, chi);
        m.A1 = bubble::moment_xdotgrad(bp, r1, chi);
    }

    auto bubble_at = [&](int b, const Vec3& x) {
        return bubble::value(st.bubbles[b].params, std::span<const double>(x.data(), 3));
    };
    auto bubble_grad = [&](int b, const Vec3& x) {
        Vec3 g;
        bubble::gradient(st.bubbles[b].params, std::span<const double>(x.data(), 3),
                         std::span<double>(g.data(), 3));
        return g;
    };

    // ---------------- Dirichlet part ----------------
    double dirichlet = 0.0;

    // Self terms  int a |grad U_b|^2.
    for (int b = 0; b < k; ++b) {
        const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                      st.bubbles[b].params.xi[2]};
        const auto hess = weight.hessian(xi);
        const double lap_a = hess[0] + hess[4] + hess[8];
        dirichlet += weight.value(xi) * mom[b].G0 + lap_a / 6.0 * mom[b].G2;
    }
    // Cross terms int a grad U_b . grad U_c, b != c, by parts onto the concentrated
    // kernel f(U_b):  int (a f(U_b) - grad a . grad U_b) U_c + oint a (d_nu U_b) U_c.
    // Near-moment parts here; far-grid and boundary pieces are folded in below.
    for (int b = 0; b < k; ++b)
        for (int c = 0; c < k; ++c) {
            if (c == b) continue;
            const double sg = st.bubbles[b].sign * st.bubbles[c].sign;
            const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                          st.bubbles[b].params.xi[2]};
            const double a_xi = weight.value(xi);
            const Vec3 ga = weight.gradient(xi);
            const auto hess = weight.hessian(xi);
            const double lap_a = hess[0] + hess[4] + hess[8];
            const double Uc = bubble_at(c, xi);
            const Vec3 gUc = bubble_grad(c, xi);
            const double lap_Uc = -std::pow(Uc, p - 1.0);
            const double aUc = a_xi * Uc;
            const double lap_aUc = a_xi * lap_Uc + 2.0 * dot(ga, gUc) + Uc * lap_a;
            const double fterm = aUc * mom[b].M0_p1 + lap_aUc / 6.0 * mom[b].M2_p1;
            const double gterm = mom[b].A1 / 3.0 * (dot(ga, gUc) + Uc * lap_a);
            dirichlet += sg * (fterm - gterm);
        }

    // Cross with w:  2 s_b [ int a f(U_b) w - int (grad a . grad U_b) w ]  (near parts).
    for (int b = 0; b < k; ++b) {
        const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                      st.bubbles[b].params.xi[2]};
        const auto pw = probe_field(disc, w, xi);
        const double a_xi = weight.value(xi);
        const Vec3 ga = weight.gradient(xi);
        const auto hess = weight.hessian(xi);
        const double lap_a = hess[0] + hess[4] + hess[8];
        const double aw = a_xi * pw.value;
        const double lap_aw = a_xi * pw.lap + 2.0 * dot(ga, pw.grad) + pw.value * lap_a;
        const double fterm = aw * mom[b].M0_p1 + lap_aw / 6.0 * mom[b].M2_p1;
        const double gterm = mom[b].A1 / 3.0 * (dot(ga, pw.grad) + pw.value * lap_a);
        dirichlet += 2.0 * st.bubbles[b].sign * (fterm - gterm);
    }

    // Grid quadrature of the far remainder of all the above cross/self integrands.
    {
        const auto& gg = disc.geom();
        double far = 0.0;
        for (int m = 0; m < n; ++m) {
            const Vec3 x = gg.position(m);
            double chi_sum = 0.0;
            std::vector<double> chis(k);
            for (int b = 0; b < k; ++b) {
                const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                              st.bubbles[b].params.xi[2]};
                chis[b] = chi_weight(x, xi, mom[b].r0, mom[b].r1);
                chi_sum += chis[b];
            }
            const double a_x = disc.node_weight()[m];
            const Vec3 ga = weight.gradient(x);
            double val = 0.0;
            for (int b = 0; b < k; ++b) {
                const Vec3 gub = bubble_grad(b, x);
                const double Ub = bubble_at(b, x);
                const double fub = std::pow(Ub, p - 1.0);
                // self term |grad U_b|^2 outside the cutoff
                val += (1.0 - chis[b]) * a_x * dot(gub, gub);
                // bubble-bubble cross terms (by parts, far part)
                for (int c = 0; c < k; ++c) {
                    if (c == b) continue;
                    const double Uc = bubble_at(c, x);
                    val += st.bubbles[b].sign * st.bubbles[c].sign * (1.0 - chis[b]) *
                           (a_x * fub - dot(ga, gub)) * Uc;
                }
                // w-cross terms (by parts, far part)
                val += 2.0 * st.bubbles[b].sign * (1.0 - chis[b]) *
                       (a_x * fub - dot(ga, gub)) * w[m];
            }
            far += val * gg.vol_weight[m];
        }
        dirichlet += far;
    }

    // Boundary term of the integration by parts: 2 \oint a (d_nu S) w, with w|bnd = -S|bnd.
    {
        const Vec3 c = dom.center();
        const double R = dom.radius();
        double min_off = 1e300;
        for (int b = 0; b < k; ++b) min_off = std::min(min_off, st.bubbles[b].offset);
        const int m1 = std::clamp(int(8.0 * R / std::max(min_off, 1e-6)), 64, 480);
        const auto rule = quad::gauss_legendre(m1);
        const int m2 = 2 * m1;
        double bnd = 0.0;
        for (int iu = 0; iu < m1; ++iu) {
            const double cu = rule.x[iu];
            const double su = std::sqrt(std::max(0.0, 1.0 - cu * cu));
            for (int ip = 0; ip < m2; ++ip) {
                const double ph = 2.0 * M_PI * ip / m2;
                const Vec3 nrm{su * std::cos(ph), su * std::sin(ph), cu};  // outward
                const Vec3 x = c + R * nrm;
                double S = 0.0, dS = 0.0, cross = 0.0;
                std::vector<double> Ub(k), dUb(k);
                for (int b = 0; b < k; ++b) {
                    Ub[b] = bubble_at(b, x);
                    dUb[b] = dot(bubble_grad(b, x), nrm);
                    S += st.bubbles[b].sign * Ub[b];
                    dS += st.bubbles[b].sign * dUb[b];
                }
                for (int b = 0; b < k; ++b)
                    for (int cc = 0; cc < k; ++cc)
                        if (cc != b)
                            cross += st.bubbles[b].sign * st.bubbles[cc].sign * dUb[b] * Ub[cc];
                bnd += weight.value(x) * (cross - 2.0 * dS * S) * rule.w[iu] * (2.0 * M_PI / m2);
            }
        }
        dirichlet += bnd * R * R;
    }

    // Discrete energy of the smooth part with its true boundary trace.
    {
        auto gfun = [&](const Vec3& x) {
            double S = 0.0;
            for (int b = 0; b < k; ++b) S += st.bubbles[b].sign * bubble_at(b, x);
            return -S;
        };
        dirichlet += disc.dirichlet_energy_with_boundary(w, gfun);
    }

    // ---------------- Potential part ----------------
    double potential = 0.0;
    const double c2 = 0.5 * (p - eps) * (p - 1 - eps);
    for (int b = 0; b < k; ++b) {
        const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                      st.bubbles[b].params.xi[2]};
        const double sg = st.bubbles[b].sign;
        // wt = sg * (sum_{c != b} s_c U_c + w), the smooth companion inside this ball.
        auto pw = probe_field(disc, w, xi);
        double wt = pw.value;
        Vec3 gwt = pw.grad;
        double lwt = pw.lap;
        for (int c = 0; c < k; ++c) {
            if (c == b) continue;
            const double sc = st.bubbles[c].sign;
            wt += sc * bubble_at(c, xi);
            const Vec3 gc = bubble_grad(c, xi);
            for (int d = 0; d < 3; ++d) gwt[d] += sc * gc[d];
            lwt += sc * (-std::pow(bubble_at(c, xi), p - 1.0));
        }
        wt *= sg;
        lwt *= sg;
        for (int d = 0; d < 3; ++d) gwt[d] *= sg;

        const double a_xi = weight.value(xi);
        const Vec3 ga = weight.gradient(xi);
        const auto hess = weight.hessian(xi);
        const double lap_a = hess[0] + hess[4] + hess[8];

        const double t0 = a_xi * mom[b].M0_pe + lap_a / 6.0 * mom[b].M2_pe;
        const double awt = a_xi * wt;
        const double lap_awt = a_xi * lwt + 2.0 * dot(ga, gwt) + wt * lap_a;
        const double t1 = (p - eps) * (awt * mom[b].M0_p1e + lap_awt / 6.0 * mom[b].M2_p1e);
        const double awt2 = a_xi * wt * wt;
        const double lap_awt2 = lap_a * wt * wt + 4.0 * wt * dot(ga, gwt) +
                                a_xi * (2.0 * dot(gwt, gwt) + 2.0 * wt * lwt);
        const double t2 = c2 * (awt2 * mom[b].M0_p2e + lap_awt2 / 6.0 * mom[b].M2_p2e);
        potential += t0 + t1 + t2;
    }
    // Grid part: far field plus the third-order remainder inside the balls.
    {
        const auto& gg = disc.geom();
        double far = 0.0;
        for (int m = 0; m < n; ++m) {
            const Vec3 x = gg.position(m);
            double S = 0.0;
            for (int b = 0; b < k; ++b) S += st.bubbles[b].sign * bubble_at(b, x);
            const double un = S + w[m];
            const double a_x = disc.node_weight()[m];
            // a|u|^{p-eps} minus the chi-weighted moment models: what remains is the far
            // field plus the in-ball remainder beyond second order in the smooth companion.
            double val = a_x * std::pow(std::abs(un), p - eps);
            for (int b = 0; b < k; ++b) {
                const Vec3 xi{st.bubbles[b].params.xi[0], st.bubbles[b].params.xi[1],
                              st.bubbles[b].params.xi[2]};
                const double chi = chi_weight(x, xi, mom[b].r0, mom[b].r1);
                if (chi == 0.0) continue;
                const double Ub = bubble_at(b, x);
                const double wt = st.bubbles[b].sign * un - Ub;
                const double model = std::pow(Ub, p - eps) +
                                     (p - eps) * std::pow(Ub, p - 1 - eps) * wt +
                                     c2 * std::pow(Ub, p - 2 - eps) * wt * wt;
                val -= chi * a_x * model;
            }
            far += val * gg.vol_weight[m];
        }
        potential += far;
    }

    const double value = 0.5 * dirichlet - potential / (p - eps);
    if (breakdown) {
        breakdown->dirichlet = dirichlet;
        breakdown->potential = potential;
        breakdown->value = value;
    }
    return value;
}

}  // namespace concentra::ansatz
