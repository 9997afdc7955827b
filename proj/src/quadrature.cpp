#include "concentra/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace concentra::quad {

namespace {

// Gauss-Kronrod 15-point nodes/weights on [-1,1]; Gauss-7 embedded.
constexpr double xgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double wgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084728811403334708884371};
constexpr double wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GK {
    double value;
    double error;
    double resabs;  // integral of |f|, for the roundoff floor
};

GK gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double resk = wgk[7] * fc, resg = wg[3] * fc, rabs = wgk[7] * std::abs(fc);
    for (int j = 0; j < 7; ++j) {
        const double x = h * xgk[j];
        const double fm = f(c - x), fp = f(c + x);
        resk += wgk[j] * (fm + fp);
        rabs += wgk[j] * (std::abs(fm) + std::abs(fp));
        if (j % 2 == 1) resg += wg[j / 2] * (fm + fp);
    }
    GK r;
    r.value = resk * h;
    r.error = std::abs((resk - resg) * h);
    r.resabs = rabs * std::abs(h);
    return r;
}

double adapt(const std::function<double(double)>& f, double a, double b, double tol,
             int depth, const Options& opt) {
    const GK whole = gk15(f, a, b);
    // Stop on the requested tolerance or once the estimate sits at roundoff level
    // relative to the panel mass; without the floor the tolerance halving races the
    // roundoff plateau at the same rate and the tree explodes.
    const double floor_tol = 64.0 * 2.3e-16 * whole.resabs + 1e-305;
    if (whole.error <= std::max(tol, floor_tol) || depth >= opt.max_depth) {
        if (depth >= opt.max_depth && whole.error > std::max(1e3 * tol, floor_tol))
            throw std::runtime_error("quadrature-failure: adaptive refinement exhausted");
        return whole.value;
    }
    const double m = 0.5 * (a + b);
    return adapt(f, a, m, 0.5 * tol, depth + 1, opt) + adapt(f, m, b, 0.5 * tol, depth + 1, opt);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, const Options& opt) {
    if (a == b) return 0.0;
    const GK probe = gk15(f, a, b);
    const double tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(probe.value));
    return adapt(f, a, b, tol, 0, opt);
}

double integrate_semi_infinite(const std::function<double(double)>& f, double a, const Options& opt) {
    auto g = [&](double t) {
        const double om = 1.0 - t;
        const double r = a + t / om;
        return f(r) / (om * om);
    };
    return integrate(g, 0.0, 1.0 - 1e-14, opt);
}

double unit_sphere_area(int n) {
    if (n < 1) throw std::invalid_argument("unit_sphere_area: n >= 1 required");
    return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

double sphere_area(int d) { return unit_sphere_area(d + 1); }

double smooth_cutoff(double r, double r0, double r1) {
    if (r <= r0) return 1.0;
    if (r >= r1) return 0.0;
    const double x = (r - r0) / (r1 - r0);
    const double s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
    return 1.0 - s;
}

GaussRule gauss_legendre(int m) {
    if (m < 1) throw std::invalid_argument("gauss_legendre: m >= 1");
    GaussRule rule;
    rule.x.resize(m);
    rule.w.resize(m);
    for (int i = 0; i < (m + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= m; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = m * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.x[i] = -x;
        rule.x[m - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        rule.w[i] = w;
        rule.w[m - 1 - i] = w;
    }
    return rule;
}

}  // namespace concentra::quad
