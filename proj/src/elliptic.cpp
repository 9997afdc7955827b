#include "concentra/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace concentra::fd {

double f_eps(double s, double p, double eps) {
    if (s == 0.0) return 0.0;
    return std::pow(std::abs(s), p - 2.0 - eps) * s;
}

double f_eps_prime(double s, double p, double eps) {
    if (s == 0.0) return 0.0;
    return (p - 1.0 - eps) * std::pow(std::abs(s), p - 2.0 - eps);
}

namespace {

ProjectedBubble project_sampled(const std::shared_ptr<const Discretization>& disc,
                                const bubble::BubbleParams& b,
                                const std::function<double(const Vec3&)>& fn) {
    ProjectedBubble out{b, {}, {}, {}};
    out.u_samples = disc->sample(fn);
    out.harmonic.disc = disc;
    out.harmonic.v = disc->dirichlet_extension(fn);
    out.pu.disc = disc;
    out.pu.v.resize(out.u_samples.size());
    for (std::size_t i = 0; i < out.pu.v.size(); ++i)
        out.pu.v[i] = out.u_samples.v[i] - out.harmonic.v[i];
    return out;
}

}  // namespace

ProjectedBubble project_bubble(const std::shared_ptr<const Discretization>& unit_disc,
                               const bubble::BubbleParams& b) {
    const Vec3 xi{b.xi[0], b.xi[1], b.xi[2]};
    if (!unit_disc->geom().domain->contains(xi))
        throw std::domain_error("outside-domain: bubble center not in Omega");
    return project_sampled(unit_disc, b, [&](const Vec3& x) {
        return bubble::value(b, std::span<const double>(x.data(), 3));
    });
}

ProjectedBubble project_bubble_derivative(const std::shared_ptr<const Discretization>& unit_disc,
                                          const bubble::BubbleParams& b, int j) {
    const Vec3 xi{b.xi[0], b.xi[1], b.xi[2]};
    if (!unit_disc->geom().domain->contains(xi))
        throw std::domain_error("outside-domain: bubble center not in Omega");
    return project_sampled(unit_disc, b, [&](const Vec3& x) {
        return bubble::derivative(b, std::span<const double>(x.data(), 3), j);
    });
}

ReflectionSet::ReflectionSet(const GridGeometry& g,
                             const std::vector<std::pair<int, double>>& planes) {
    for (const auto& [axis, plane] : planes) {
        const double k2 = 2.0 * (plane - g.origin[axis]) / g.h;
        const long k2i = std::lround(k2);
        if (std::abs(k2 - double(k2i)) > 1e-8)
            throw std::invalid_argument("invalid-reflection: plane not lattice-aligned");
        std::vector<std::int32_t> map(g.n_interior, -1);
        for (int i = 0; i < g.n_interior; ++i) {
            auto c = g.ijk[i];
            int m[3] = {c[0], c[1], c[2]};
            m[axis] = int(k2i) - c[axis];
            map[i] = g.node_at(m[0], m[1], m[2]);
            if (map[i] < 0)
                throw std::invalid_argument("invalid-reflection: grid not symmetric under plane");
        }
        maps_.push_back(std::move(map));
    }
}

void ReflectionSet::symmetrize(std::span<double> u) const {
    for (const auto& map : maps_) {
        for (std::size_t i = 0; i < map.size(); ++i) {
            const std::size_t j = std::size_t(map[i]);
            if (j < i) continue;
            const double avg = 0.5 * (u[i] + u[j]);
            u[i] = avg;
            u[j] = avg;
        }
    }
}

NewtonResult newton_solve(const std::shared_ptr<const Discretization>& disc, double eps,
                          const GridField& u0, const ReflectionSet* symmetrize,
                          const NewtonOptions& opts) {
    const int n = disc->size();
    const int dim = 3;
    const double p = bubble::critical_p(dim);
    if (eps < 0.0 || eps >= p - 2.0)
        throw std::invalid_argument("invalid-parameter: eps must lie in [0, 4/(n-2))");
    const auto& a = disc->node_weight();

    NewtonResult res;
    res.u.disc = disc;
    res.u.v = u0.v;
    if (symmetrize) symmetrize->symmetrize(res.u.v);

    std::vector<double> F(n), s(n), trial(n);
    auto eval_F = [&](const std::vector<double>& u, std::vector<double>& out) {
        disc->apply(u, out);
        for (int i = 0; i < n; ++i) out[i] -= a[i] * f_eps(u[i], p, eps);
    };
    eval_F(res.u.v, F);
    double fn = disc->dual_norm(F);
    res.residual_history.push_back(fn);

    for (int it = 0; it < opts.max_iterations; ++it) {
        if (fn < opts.dual_tol) {
            res.converged = true;
            break;
        }
        std::vector<double> c(n);
        for (int i = 0; i < n; ++i) c[i] = a[i] * f_eps_prime(res.u.v[i], p, eps);
        std::vector<double> rhs(n);
        for (int i = 0; i < n; ++i) rhs[i] = -F[i];

        // Damped step; on line-search failure retry with a Levenberg shift toward the
        // operator metric (the path can cross a fold of the linearization).
        double fn_trial = 0.0;
        bool accepted = false;
        for (double reg : {0.0, 1e-3, 1e-2, 1e-1, 0.5, 2.0}) {
            LinOp J = [&](std::span<const double> v, std::span<double> out) {
                disc->apply(v, out);
                for (int i = 0; i < n; ++i)
                    out[i] += (reg * disc->diagonal()[i] - c[i]) * v[i];
            };
            s.assign(n, 0.0);
            const SolveReport lin = minres(J, rhs, s, opts.linear_rel_tol,
                                           opts.linear_max_iter, disc->diagonal());
            if (!lin.converged && lin.relative_residual > 1e-4) continue;
            double lambda = 1.0;
            for (int halve = 0; halve <= opts.max_damping_halvings; ++halve) {
                for (int i = 0; i < n; ++i) trial[i] = res.u.v[i] + lambda * s[i];
                if (symmetrize) symmetrize->symmetrize(trial);
                eval_F(trial, F);
                fn_trial = disc->dual_norm(F);
                if (fn_trial < fn || fn_trial < opts.dual_tol) {
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if (accepted) break;
        }
        if (!accepted) {
            // Residual refused to decrease even fully damped and regularized.
            eval_F(res.u.v, F);
            break;
        }
        res.u.v = trial;
        fn = fn_trial;
        res.residual_history.push_back(fn);
        res.iterations = it + 1;
    }
    if (!res.converged && fn < opts.dual_tol) res.converged = true;
    if (!res.converged) {
        if (res.iterations >= opts.max_iterations)
            throw std::runtime_error("no-convergence: Newton residual stagnated");
        throw std::runtime_error("no-convergence: Newton damping exhausted");
    }
    double umax = 0.0;
    for (double v : res.u.v) umax = std::max(umax, std::abs(v));
    res.trivial = umax < 1e-7;
    return res;
}

double residual_dual_norm(const Discretization& disc, std::span<const double> u, double eps) {
    const double p = bubble::critical_p(3);
    std::vector<double> F(u.size());
    disc.apply(u, F);
    const auto& a = disc.node_weight();
    for (std::size_t i = 0; i < u.size(); ++i) F[i] -= a[i] * f_eps(u[i], p, eps);
    return disc.dual_norm(F);
}

std::vector<double> linearized_spectrum(const std::shared_ptr<const Discretization>& disc,
                                        std::span<const double> u, double eps, int count) {
    const int n = disc->size();
    const double p = bubble::critical_p(3);
    const auto& a = disc->node_weight();
    std::vector<double> c(n);
    double cmax = 0.0;
    for (int i = 0; i < n; ++i) {
        c[i] = f_eps_prime(u[i], p, eps);
        cmax = std::max(cmax, c[i]);
    }
    const double sigma = -cmax - 1.0;

    // (J - sigma M) v with J v = A v - a c v and M = diag(a).
    std::vector<double> shifted_diag(n);
    for (int i = 0; i < n; ++i) shifted_diag[i] = disc->diagonal()[i] + a[i] * (-c[i] - sigma);
    LinOp shifted = [&](std::span<const double> v, std::span<double> out) {
        disc->apply(v, out);
        for (int i = 0; i < n; ++i) out[i] += a[i] * (-c[i] - sigma) * v[i];
    };

    auto m_dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += a[i] * x[i] * y[i];
        return s;
    };

    const int m = std::min(n, std::max(40, 2 * count + 25));
    std::vector<std::vector<double>> basis;
    std::vector<double> alpha, beta;
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss;
    std::vector<double> q(n);
    for (auto& qi : q) qi = gauss(rng);
    double qn = std::sqrt(m_dot(q, q));
    for (auto& qi : q) qi /= qn;
    basis.push_back(q);

    std::vector<double> w(n), mq(n);
    for (int k = 0; k < m; ++k) {
        // w = (J - sigma M)^{-1} M q_k
        for (int i = 0; i < n; ++i) mq[i] = a[i] * basis[k][i];
        w.assign(n, 0.0);
        const SolveReport rep = cg(shifted, mq, w, 1e-10, 20000, shifted_diag);
        if (!rep.converged) throw std::runtime_error("solver-failure: eigensolver inner solve");
        const double ak = m_dot(w, basis[k]);
        alpha.push_back(ak);
        for (int i = 0; i < n; ++i) w[i] -= ak * basis[k][i];
        if (k > 0)
            for (int i = 0; i < n; ++i) w[i] -= beta[k - 1] * basis[k - 1][i];
        // Full reorthogonalization, twice.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                const double proj = m_dot(w, b);
                for (int i = 0; i < n; ++i) w[i] -= proj * b[i];
            }
        const double bn = std::sqrt(std::max(0.0, m_dot(w, w)));
        if (bn < 1e-14 || k == m - 1) break;
        beta.push_back(bn);
        for (int i = 0; i < n; ++i) w[i] /= bn;
        basis.push_back(w);
    }
    const int kdim = int(alpha.size());
    std::vector<double> t(std::size_t(kdim) * kdim, 0.0);
    for (int i = 0; i < kdim; ++i) {
        t[std::size_t(i) * kdim + i] = alpha[i];
        if (i + 1 < kdim) {
            t[std::size_t(i) * kdim + i + 1] = beta[i];
            t[std::size_t(i + 1) * kdim + i] = beta[i];
        }
    }
    auto mu = symmetric_eigenvalues(std::move(t), kdim);  // ascending
    // Pencil eigenvalues lambda = sigma + 1/mu; largest mu -> smallest lambda.
    std::vector<double> lambdas;
    for (int i = kdim - 1; i >= 0 && int(lambdas.size()) < count; --i) {
        if (mu[i] <= 0) continue;  // converged Ritz values of the SPD-inverted pencil are > 0
        lambdas.push_back(sigma + 1.0 / mu[i]);
    }
    if (int(lambdas.size()) < count)
        throw std::runtime_error("solver-failure: eigensolver returned too few values");
    std::sort(lambdas.begin(), lambdas.end());
    return lambdas;
}

}  // namespace concentra::fd
