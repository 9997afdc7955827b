#include "concentra/green.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "concentra/quadrature.hpp"

namespace concentra::green {

namespace {

double norm_sq(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
}

}  // namespace

double kernel_gamma(std::span<const double> x, std::span<const double> y, int n) {
    return std::pow(dist2(x, y), -0.5 * (n - 2));
}

double unit_ball_volume(int n) {
    return std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

double green_normalized(std::span<const double> x, std::span<const double> y, int n, double H) {
    return (kernel_gamma(x, y, n) - H) / (n * (n - 2) * unit_ball_volume(n));
}

double regular_part_ball(std::span<const double> x, std::span<const double> y, int n) {
    if (norm_sq(x) >= 1.0 || norm_sq(y) >= 1.0)
        throw std::domain_error("outside-domain: regular_part_ball needs points in the open unit ball");
    // |y|^2 |x - y/|y|^2|^2 = |x|^2 |y|^2 - 2 x.y + 1, smooth through y = 0.
    const double q = norm_sq(x) * norm_sq(y) - 2.0 * dot(x, y) + 1.0;
    return std::pow(q, -0.5 * (n - 2));
}

void regular_part_ball_gradient(std::span<const double> x, std::span<const double> y, int n,
                                std::span<double> grad) {
    const double q = norm_sq(x) * norm_sq(y) - 2.0 * dot(x, y) + 1.0;
    const double c = -0.5 * (n - 2) * std::pow(q, -0.5 * (n - 2) - 1.0);
    const double y2 = norm_sq(y);
    for (int d = 0; d < n; ++d) grad[d] = c * (2.0 * x[d] * y2 - 2.0 * y[d]);
}

double regular_part_halfspace(std::span<const double> x, std::span<const double> y, int n) {
    if (x[n - 1] <= 0.0 || y[n - 1] <= 0.0)
        throw std::domain_error("outside-domain: regular_part_halfspace needs x_n, y_n > 0");
    double s = 0;
    for (int d = 0; d + 1 < n; ++d) s += sqr(x[d] - y[d]);
    s += sqr(x[n - 1] + y[n - 1]);
    return std::pow(s, -0.5 * (n - 2));
}

void regular_part_halfspace_gradient(std::span<const double> x, std::span<const double> y, int n,
                                     std::span<double> grad) {
    double s = 0;
    for (int d = 0; d + 1 < n; ++d) s += sqr(x[d] - y[d]);
    s += sqr(x[n - 1] + y[n - 1]);
    const double c = -(n - 2) * std::pow(s, -0.5 * n);
    for (int d = 0; d + 1 < n; ++d) grad[d] = c * (x[d] - y[d]);
    grad[n - 1] = c * (x[n - 1] + y[n - 1]);
}

fd::GridField regular_part_numeric(const std::shared_ptr<const fd::Discretization>& unit_disc,
                                   const Vec3& y) {
    const auto& dom = *unit_disc->geom().domain;
    const double h = unit_disc->h();
    if (dom.boundary_distance(y) <= 2.0 * h)
        throw std::invalid_argument("resolution-error: source point within 2h of the boundary");
    fd::GridField H;
    H.disc = unit_disc;
    H.v = unit_disc->dirichlet_extension([&](const Vec3& x) {
        return kernel_gamma(std::span<const double>(x.data(), 3),
                            std::span<const double>(y.data(), 3), 3);
    });
    return H;
}

CollarBoundsReport check_collar_bounds(const geom::DomainModel& dom, int samples, unsigned seed,
                                       const std::string& csv_path) {
    if (dom.kind() != geom::DomainKind::UnitBall)
        throw std::invalid_argument("invalid-domain: collar bounds sampler uses the exact unit-ball kernel");
    const int n = 3;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss;

    struct Row {
        double d_x, dist, r2, r31, r15;
    };
    std::vector<Row> rows;
    rows.reserve(samples);
    CollarBoundsReport rep;
    rep.min_H = 1e300;

    auto random_dir = [&]() {
        Vec3 v{gauss(rng), gauss(rng), gauss(rng)};
        const double nn = norm(v);
        return (1.0 / nn) * v;
    };

    for (int s = 0; s < samples; ++s) {
        // x in the collar with d_x in [0.01, 0.2]; y anywhere in the ball.
        const double dx = 0.01 + (0.2 - 0.01) * uni(rng);
        const Vec3 xdir = random_dir();
        const Vec3 x = (1.0 - dx) * xdir;
        const Vec3 ydir = random_dir();
        const double ry = std::cbrt(uni(rng)) * 0.98;
        const Vec3 y = ry * ydir;

        const auto col = dom.collar_data(x);
        std::span<const double> xs(x.data(), 3), ys(y.data(), 3);
        const double H = regular_part_ball(xs, ys, n);
        rep.min_H = std::min(rep.min_H, H);
        const double comp = std::pow(dist2(std::span<const double>(col.x_bar.data(), 3), ys),
                                     -0.5 * (n - 2));
        const double distxy = std::sqrt(dist2(std::span<const double>(col.x_bar.data(), 3), ys));
        Vec3 g;
        regular_part_ball_gradient(xs, ys, n, std::span<double>(g.data(), 3));
        Row row;
        row.d_x = col.d_x;
        row.dist = distxy;
        row.r2 = std::abs(H - comp) / (col.d_x * comp);
        row.r31 = H / comp;
        row.r15 = norm(g) * std::pow(dist2(xs, ys), 0.5 * (n - 1));
        rows.push_back(row);
        rep.sup_ratio2 = std::max(rep.sup_ratio2, row.r2);
        rep.sup_ratio31 = std::max(rep.sup_ratio31, row.r31);
        rep.sup_ratio15 = std::max(rep.sup_ratio15, row.r15);
    }
    rep.samples = samples;

    // Binned maxima against d_x, then OLS slope; >= 0 means no growth toward the boundary.
    const int nbins = 12;
    std::vector<double> bin_max2(nbins, 0), bin_max31(nbins, 0), bin_max15(nbins, 0),
        bin_mid(nbins, 0);
    for (int b = 0; b < nbins; ++b) bin_mid[b] = 0.01 + (0.2 - 0.01) * (b + 0.5) / nbins;
    for (const auto& r : rows) {
        int b = int((r.d_x - 0.01) / (0.2 - 0.01) * nbins);
        b = std::clamp(b, 0, nbins - 1);
        bin_max2[b] = std::max(bin_max2[b], r.r2);
        bin_max31[b] = std::max(bin_max31[b], r.r31);
        bin_max15[b] = std::max(bin_max15[b], r.r15);
    }
    const auto f2 = fit_line(bin_mid, bin_max2);
    const auto f31 = fit_line(bin_mid, bin_max31);
    const auto f15 = fit_line(bin_mid, bin_max15);
    rep.slope2 = f2.slope;
    rep.stderr2 = f2.slope_stderr;
    rep.slope31 = f31.slope;
    rep.stderr31 = f31.slope_stderr;
    rep.slope15 = f15.slope;
    rep.stderr15 = f15.slope_stderr;

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("io-error: cannot open " + csv_path);
        out << "d_x,dist_xbar_y,ratio2,ratio31,ratio15\n";
        out.precision(12);
        for (const auto& r : rows)
            out << r.d_x << "," << r.dist << "," << r.r2 << "," << r.r31 << "," << r.r15 << "\n";
    }
    return rep;
}

}  // namespace concentra::green
