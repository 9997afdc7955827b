#include "concentra/reduced.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "concentra/bubble.hpp"
#include "concentra/quadrature.hpp"

namespace concentra::reduced {

GammaConstants gamma_constants(int n) {
    if (n < 3) throw std::invalid_argument("invalid-dimension: gamma constants need n >= 3");
    const double p = bubble::critical_p(n);
    const double ap = std::pow(bubble::alpha_n(n), p);
    const double area = quad::unit_sphere_area(n);
    quad::Options opt;
    opt.rel_tol = 1e-12;
    GammaConstants g;
    g.n = n;
    g.gamma1 = ap * area *
               quad::integrate_semi_infinite(
                   [n](double r) { return std::pow(r, n - 1) * std::pow(1 + r * r, -double(n)); },
                   0.0, opt);
    g.gamma2 = ap * area *
               quad::integrate_semi_infinite(
                   [n](double r) {
                       return std::pow(r, n - 1) * std::pow(1 + r * r, -0.5 * (n + 2));
                   },
                   0.0, opt);
    g.gamma3 = ap * area *
               quad::integrate_semi_infinite(
                   [n](double r) {
                       return std::pow(r, n - 1) * std::pow(1 + r * r, -double(n)) *
                              (-0.5 * (n - 2)) * std::log1p(r * r);
                   },
                   0.0, opt);
    return g;
}

ReducedModel assemble_coefficients(const GammaConstants& g) {
    ReducedModel m;
    m.gammas = g;
    m.n = g.n;
    m.p = bubble::critical_p(g.n);
    const double p = m.p, n = g.n;
    const double an = bubble::alpha_n(g.n);
    m.c1 = (p - 2.0) / (2.0 * p) * g.gamma1;
    m.c2 = -(n - 1.0) / (2.0 * p) * g.gamma1;
    m.c3 = g.gamma1 * an / p + g.gamma3 / p - g.gamma1 / (p * p);
    m.c4 = (p - 2.0) / (2.0 * p) * g.gamma1;
    m.c5 = 0.5 * g.gamma2;
    m.c6 = (n - 2.0) / (2.0 * p) * g.gamma1;
    m.provenance = {
        "c1 = (p-2)/(2p) gamma1",
        "c2 = -(n-1)/(2p) gamma1",
        "c3 = gamma1 alpha_n/p + gamma3/p - gamma1/p^2 (candidate; fitted in reports)",
        "c4 = (p-2)/(2p) gamma1",
        "c5 = gamma2/2",
        "c6 = (n-2)/(2p) gamma1",
    };
    if (!(m.c4 > 0) || !(m.c5 > 0) || !(m.c6 > 0))
        throw std::runtime_error("assembly-inconsistency: c4, c5, c6 must be positive");
    return m;
}

double expansion_separated(const ReducedModel& m, const std::vector<AnchorData>& anchors,
                           const std::vector<double>& d, const std::vector<double>& t,
                           double eps) {
    const int k = int(anchors.size());
    const double nm2 = m.n - 2.0;
    double lead = 0.0, bracket = 0.0;
    for (int i = 0; i < k; ++i) {
        lead += anchors[i].a;
        bracket += m.c3 * anchors[i].a + m.c4 * anchors[i].g * t[i] +
                   m.c5 * anchors[i].a * std::pow(d[i] / (2.0 * t[i]), nm2) -
                   m.c6 * anchors[i].a * std::log(d[i]);
    }
    return (m.c1 + m.c2 * eps * std::log(eps)) * lead + eps * bracket;
}

std::vector<double> expansion_separated_gradient(const ReducedModel& m,
                                                 const std::vector<AnchorData>& anchors,
                                                 const std::vector<double>& d,
                                                 const std::vector<double>& t, double eps) {
    const int k = int(anchors.size());
    const double nm2 = m.n - 2.0;
    std::vector<double> grad(2 * k, 0.0);
    for (int i = 0; i < k; ++i) {
        const double ratio = std::pow(d[i] / (2.0 * t[i]), nm2);
        grad[i] = eps * (m.c5 * anchors[i].a * nm2 * ratio / d[i] - m.c6 * anchors[i].a / d[i]);
        grad[k + i] = eps * (m.c4 * anchors[i].g - m.c5 * anchors[i].a * nm2 * ratio / t[i]);
    }
    return grad;
}

double psi_tower(const ReducedModel& m, const AnchorData& anchor, const std::vector<double>& d,
                 const std::vector<double>& t) {
    const int l = int(d.size());
    const double nm2 = m.n - 2.0;
    for (int i = 0; i < l; ++i)
        for (int j = i + 1; j < l; ++j)
            if (t[i] == t[j])
                throw std::domain_error("singular-configuration: t_i = t_j in the tower");
    double val = 0.0;
    for (int i = 0; i < l; ++i) {
        val += m.c4 * anchor.g * t[i];
        val += m.c5 * anchor.a * std::pow(d[i] / (2.0 * t[i]), nm2);
        val -= m.c6 * anchor.a * std::log(d[i]);
    }
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j) {
            if (i == j) continue;
            const double sign = ((i + j + 1) % 2 == 0) ? 1.0 : -1.0;
            const double inter = std::pow(std::abs(t[i] - t[j]), -nm2) -
                                 std::pow(t[i] + t[j], -nm2);
            val += m.c5 * anchor.a * sign * std::pow(d[i] * d[j], 0.5 * nm2) * inter;
        }
    return val;
}

std::vector<double> psi_tower_gradient(const ReducedModel& m, const AnchorData& anchor,
                                       const std::vector<double>& d,
                                       const std::vector<double>& t) {
    const int l = int(d.size());
    const double nm2 = m.n - 2.0;
    std::vector<double> grad(2 * l, 0.0);
    for (int i = 0; i < l; ++i) {
        const double ratio = std::pow(d[i] / (2.0 * t[i]), nm2);
        grad[i] += m.c5 * anchor.a * nm2 * ratio / d[i] - m.c6 * anchor.a / d[i];
        grad[l + i] += m.c4 * anchor.g - m.c5 * anchor.a * nm2 * ratio / t[i];
    }
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j) {
            if (i == j) continue;
            const double sign = ((i + j + 1) % 2 == 0) ? 1.0 : -1.0;
            const double dd = std::pow(d[i] * d[j], 0.5 * nm2);
            const double diff = t[i] - t[j];
            const double inter = std::pow(std::abs(diff), -nm2) - std::pow(t[i] + t[j], -nm2);
            // The (i,j) and (j,i) summands are equal, so each ordered pair carries the
            // full derivative of both in its i-slots.
            grad[i] += 2.0 * m.c5 * anchor.a * sign * 0.5 * nm2 * dd / d[i] * inter;
            const double dinter_dti = -nm2 * std::pow(std::abs(diff), -nm2 - 1.0) *
                                          (diff > 0 ? 1.0 : -1.0) +
                                      nm2 * std::pow(t[i] + t[j], -nm2 - 1.0);
            grad[l + i] += 2.0 * m.c5 * anchor.a * sign * dd * dinter_dti;
        }
    return grad;
}

double expansion_tower(const ReducedModel& m, const AnchorData& anchor,
                       const std::vector<double>& d, const std::vector<double>& t, double eps) {
    const int l = int(d.size());
    return l * (m.c1 + m.c2 * eps * std::log(eps) + m.c3 * eps) * anchor.a +
           eps * psi_tower(m, anchor, d, t);
}

SinglePeakStationary single_peak_closed_form(const ReducedModel& m, const AnchorData& anchor) {
    SinglePeakStationary s;
    s.t_star = m.c6 * anchor.a / (m.c4 * anchor.g);
    s.d_star = 2.0 * s.t_star * std::pow(m.c6 / ((m.n - 2.0) * m.c5), 1.0 / (m.n - 2.0));
    return s;
}

namespace {

// Objective in log coordinates: x = (log d_1.., log t_1..).
struct LogObjective {
    const ReducedModel* model;
    ansatz::Mode mode;
    const std::vector<AnchorData>* anchors;

    double value(const std::vector<double>& x) const {
        const int k = int(x.size()) / 2;
        std::vector<double> d(k), t(k);
        for (int i = 0; i < k; ++i) {
            d[i] = std::exp(x[i]);
            t[i] = std::exp(x[k + i]);
        }
        if (mode == ansatz::Mode::Separated) {
            double v = 0.0;
            for (int i = 0; i < k; ++i) {
                const auto& an = (*anchors)[i];
                v += m_bracket(an, d[i], t[i]);
            }
            return v;
        }
        // Tower offsets must stay ordered; penalize crossings smoothly by sorting.
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return t[a] < t[b]; });
        std::vector<double> ds(k), ts(k);
        for (int i = 0; i < k; ++i) {
            ds[i] = d[idx[i]];
            ts[i] = t[idx[i]];
        }
        return psi_tower(*model, (*anchors)[0], ds, ts);
    }

    double m_bracket(const AnchorData& an, double d, double t) const {
        const double nm2 = model->n - 2.0;
        return model->c4 * an.g * t + model->c5 * an.a * std::pow(d / (2 * t), nm2) -
               model->c6 * an.a * std::log(d);
    }

    std::vector<double> gradient(const std::vector<double>& x) const {
        // Central differences in log coordinates; the objectives are cheap and smooth.
        std::vector<double> g(x.size());
        const double hstep = 1e-6;
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto xp = x, xm = x;
            xp[i] += hstep;
            xm[i] -= hstep;
            g[i] = (value(xp) - value(xm)) / (2 * hstep);
        }
        return g;
    }

    std::vector<double> hessian(const std::vector<double>& x) const {
        const std::size_t n = x.size();
        std::vector<double> h(n * n);
        const double hstep = 1e-4;
        for (std::size_t i = 0; i < n; ++i) {
            auto xp = x, xm = x;
            xp[i] += hstep;
            xm[i] -= hstep;
            const auto gp = gradient(xp), gm = gradient(xm);
            for (std::size_t j = 0; j < n; ++j) h[i * n + j] = (gp[j] - gm[j]) / (2 * hstep);
        }
        // Symmetrize.
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double avg = 0.5 * (h[i * n + j] + h[j * n + i]);
                h[i * n + j] = avg;
                h[j * n + i] = avg;
            }
        return h;
    }
};

double sup_norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

}  // namespace

MinimizeResult minimize_model(const ReducedModel& model, ansatz::Mode mode,
                              const std::vector<AnchorData>& anchors, double box_lo,
                              double box_hi, int starts, unsigned seed) {
    const int k = int(anchors.size());
    for (const auto& an : anchors)
        if (!(an.g > 0))
            throw std::invalid_argument("invalid-configuration: <grad a, nu> must be positive");
    LogObjective obj{&model, mode, &anchors};
    const double lo = std::log(box_lo), hi = std::log(box_hi);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);

    MinimizeResult best;
    double best_val = 1e300;
    bool found = false;
    for (int s = 0; s < starts; ++s) {
        std::vector<double> x(2 * k);
        for (auto& xi : x) xi = uni(rng);
        if (mode == ansatz::Mode::Tower) {
            // Start from ordered offsets.
            std::sort(x.begin() + k, x.end());
            for (int i = 0; i + 1 < k; ++i)
                if (x[k + i + 1] - x[k + i] < 0.05) x[k + i + 1] = x[k + i] + 0.05;
        }
        bool ok = true;
        for (int it = 0; it < 200; ++it) {
            const auto g = obj.gradient(x);
            if (sup_norm(g) < 1e-11) break;
            auto h = obj.hessian(x);
            const std::size_t n = x.size();
            // Levenberg regularization until the step decreases the objective.
            double mu = 0.0;
            const double f0 = obj.value(x);
            bool stepped = false;
            for (int trial = 0; trial < 12; ++trial) {
                auto hreg = h;
                for (std::size_t i = 0; i < n; ++i) hreg[i * n + i] += mu;
                std::vector<double> step;
                try {
                    std::vector<double> rhs(g.begin(), g.end());
                    step = solve_dense(hreg, int(n), rhs);
                } catch (const std::exception&) {
                    mu = mu == 0.0 ? 1e-6 : mu * 10;
                    continue;
                }
                auto xt = x;
                for (std::size_t i = 0; i < n; ++i) xt[i] -= step[i];
                bool inside = true;
                for (double v : xt) inside = inside && v > lo - 2.0 && v < hi + 2.0;
                if (inside && obj.value(xt) < f0) {
                    x = xt;
                    stepped = true;
                    break;
                }
                mu = mu == 0.0 ? 1e-6 : mu * 10;
            }
            if (!stepped) break;
        }
        const auto g = obj.gradient(x);
        if (sup_norm(g) > 1e-8) ok = false;
        for (double v : x) ok = ok && v > lo - 2.0 && v < hi + 2.0;
        if (!ok) continue;
        const double val = obj.value(x);
        auto h = obj.hessian(x);
        auto ev = symmetric_eigenvalues(h, int(x.size()));
        if (ev.front() <= 0) continue;  // saddle; keep searching
        found = true;
        if (val < best_val - 1e-12) {
            best_val = val;
            best.value = val;
            best.gradient_norm = sup_norm(g);
            best.hessian_eigenvalues = ev;
            best.d.assign(k, 0.0);
            best.t.assign(k, 0.0);
            for (int i = 0; i < k; ++i) {
                best.d[i] = std::exp(x[i]);
                best.t[i] = std::exp(x[k + i]);
            }
            best.multistart_hits = 1;
        } else if (std::abs(val - best_val) <= 1e-9 * std::max(1.0, std::abs(best_val))) {
            best.multistart_hits++;
        }
    }
    if (!found) throw std::runtime_error("no-critical-point: no interior minimizer in the box");
    if (mode == ansatz::Mode::Tower) {
        // Report with offsets in increasing order.
        std::vector<int> idx(k);
        for (int i = 0; i < k; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return best.t[a] < best.t[b]; });
        MinimizeResult sorted = best;
        for (int i = 0; i < k; ++i) {
            sorted.d[i] = best.d[idx[i]];
            sorted.t[i] = best.t[idx[i]];
        }
        best = sorted;
    }
    return best;
}

std::vector<LemmaCheckRow> lemma_checks(const std::shared_ptr<const fd::Discretization>& disc,
                                        const ReducedModel& model,
                                        const ansatz::ConcentrationConfig& config,
                                        const std::vector<double>& eps_ladder) {
    std::vector<LemmaCheckRow> rows;
    const double nm2 = model.n - 2.0;
    for (double eps : eps_ladder) {
        auto st = ansatz::build_ansatz(disc, config, eps);
        const auto& b1 = st.bubbles[0];
        const Vec3 xi1{b1.params.xi[0], b1.params.xi[1], b1.params.xi[2]};
        double eta = b1.dist_bnd;
        for (std::size_t j = 1; j < st.bubbles.size(); ++j) {
            const auto& bj = st.bubbles[j];
            const Vec3 xij{bj.params.xi[0], bj.params.xi[1], bj.params.xi[2]};
            eta = std::min(eta, bj.dist_bnd);
            eta = std::min(eta, 0.5 * norm(xi1 - xij));
        }
        LemmaCheckRow row;
        row.eps = eps;
        row.delta = b1.params.delta;
        row.resolution_limited = st.resolution_limited;

        const auto& gg = disc->geom();
        const auto& a = disc->node_weight();
        double int_up = 0.0, int_pu = 0.0, int_cross = 0.0;
        for (int m = 0; m < disc->size(); ++m) {
            const Vec3 x = gg.position(m);
            if (norm(x - xi1) > eta) continue;
            const double u1 = st.proj[0].u_samples.v[m];
            const double w = gg.vol_weight[m];
            int_up += a[m] * std::pow(u1, model.p) * w;
            int_pu += a[m] * std::pow(u1, model.p - 1.0) *
                      (st.proj[0].pu.v[m] - u1) * w;
            if (st.bubbles.size() > 1)
                int_cross += a[m] * std::pow(u1, model.p - 1.0) * st.proj[1].pu.v[m] * w;
        }
        row.int_aUp = int_up;
        row.int_aUp1_PUmU = int_pu;
        row.int_aUp1_PU2 = int_cross;

        const auto wfield = disc->weight();
        const double a_s = wfield.value(b1.anchor);
        const double g_s = dot(wfield.gradient(b1.anchor), b1.nu);
        row.lhs100_dev_over_eps =
            std::abs(int_up - model.gammas.gamma1 * a_s -
                     g_s * model.gammas.gamma1 * config.t[0] * eps) / eps;
        const double pred10 = -model.gammas.gamma2 * a_s * eps *
                              std::pow(config.d[0] / (2.0 * config.t[0]), nm2);
        row.ratio10 = int_pu / pred10;
        if (st.bubbles.size() > 1) {
            if (config.mode == ansatz::Mode::Tower) {
                const double t1 = config.t[0], t2 = config.t[1];
                const double pred11 = model.gammas.gamma2 * a_s * eps *
                                      std::pow(config.d[0] * config.d[1], 0.5 * nm2) *
                                      (std::pow(std::abs(t1 - t2), -nm2) -
                                       std::pow(t1 + t2, -nm2));
                row.ratio11 = int_cross / pred11;
            } else {
                row.ratio11 = int_cross / eps;  // (eq:11) upper branch: should vanish with eps
            }
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace concentra::reduced
