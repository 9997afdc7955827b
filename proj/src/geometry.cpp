#include "concentra/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace concentra::geom {

namespace {

double rounded_box_inside_distance(const Vec3& x, const Vec3& lo, const Vec3& hi, double r) {
    // Signed distance to a box with rounded edges/corners, positive inside.
    Vec3 hc = 0.5 * (lo + hi);
    Vec3 he = 0.5 * (hi - lo);
    double q[3], maxq = -1e300;
    for (int d = 0; d < 3; ++d) {
        q[d] = std::abs(x[d] - hc[d]) - (he[d] - r);
        maxq = std::max(maxq, q[d]);
    }
    double outside = 0.0;
    for (int d = 0; d < 3; ++d) {
        const double qp = std::max(q[d], 0.0);
        outside += qp * qp;
    }
    const double sdf = std::sqrt(outside) + std::min(maxq, 0.0) - r;  // < 0 inside
    return -sdf;
}

}  // namespace

DomainModel DomainModel::unit_ball() {
    DomainModel d;
    d.kind_ = DomainKind::UnitBall;
    d.id_ = "unit-ball";
    d.center_ = {0, 0, 0};
    d.radius_ = 1.0;
    d.bbox_ = {{-1, -1, -1}, {1, 1, 1}};
    d.inradius_ = 1.0;
    d.eta_ = 0.2;
    return d;
}

DomainModel DomainModel::ball(const Vec3& center, double radius) {
    if (!(radius > 0)) throw std::invalid_argument("invalid-domain: radius must be positive");
    DomainModel d;
    d.kind_ = DomainKind::Ball;
    d.id_ = "ball(" + std::to_string(center[0]) + "," + std::to_string(center[1]) + "," +
            std::to_string(center[2]) + ";" + std::to_string(radius) + ")";
    d.center_ = center;
    d.radius_ = radius;
    d.bbox_ = {center - Vec3{radius, radius, radius}, center + Vec3{radius, radius, radius}};
    d.inradius_ = radius;
    d.eta_ = 0.2 * radius;
    return d;
}

DomainModel DomainModel::rounded_box(const Vec3& lo, const Vec3& hi, double corner_radius) {
    DomainModel d;
    d.kind_ = DomainKind::RoundedBox;
    d.id_ = "rounded-box";
    d.box_lo_ = lo;
    d.box_hi_ = hi;
    d.corner_ = corner_radius;
    d.bbox_ = {lo, hi};
    double half = 1e300;
    for (int k = 0; k < 3; ++k) half = std::min(half, 0.5 * (hi[k] - lo[k]));
    if (!(corner_radius > 0) || corner_radius > half)
        throw std::invalid_argument("invalid-domain: corner radius out of range");
    d.inradius_ = half;
    d.eta_ = 0.2 * half;
    return d;
}

DomainModel DomainModel::from_sdf(std::function<double(const Vec3&)> inside_distance,
                                  const BoundingBox& bbox, std::string id) {
    DomainModel d;
    d.kind_ = DomainKind::Sdf;
    d.id_ = std::move(id);
    d.sdf_ = std::move(inside_distance);
    d.bbox_ = bbox;
    const Vec3 c = 0.5 * (bbox.lo + bbox.hi);
    d.inradius_ = std::max(d.sdf_(c), 1e-6);
    d.eta_ = 0.2 * d.inradius_;
    return d;
}

double DomainModel::boundary_distance(const Vec3& x) const {
    switch (kind_) {
        case DomainKind::UnitBall:
        case DomainKind::Ball:
            return radius_ - norm(x - center_);
        case DomainKind::RoundedBox:
            return rounded_box_inside_distance(x, box_lo_, box_hi_, corner_);
        case DomainKind::Sdf:
            return sdf_(x);
    }
    return 0.0;
}

void DomainModel::set_eta(double eta) {
    if (!(eta > 0) || eta > inradius_)
        throw std::invalid_argument("invalid-domain: eta must lie in (0, inradius]");
    eta_ = eta;
}

const Vec3& DomainModel::center() const {
    if (kind_ != DomainKind::UnitBall && kind_ != DomainKind::Ball)
        throw std::logic_error("center(): not a ball domain");
    return center_;
}

double DomainModel::radius() const {
    if (kind_ != DomainKind::UnitBall && kind_ != DomainKind::Ball)
        throw std::logic_error("radius(): not a ball domain");
    return radius_;
}

CollarData DomainModel::collar_data(const Vec3& x) const {
    const double d = boundary_distance(x);
    if (d <= 0.0) throw std::domain_error("outside-domain: collar query outside the domain");
    if (d > 2.0 * eta_) throw std::domain_error("outside-collar: reflection undefined beyond 2*eta");

    CollarData c;
    c.d_x = d;
    if (kind_ == DomainKind::UnitBall || kind_ == DomainKind::Ball) {
        const Vec3 rc = x - center_;
        const double rn = norm(rc);
        if (rn == 0.0) throw std::domain_error("outside-collar: center has no unique projection");
        const Vec3 outward = (1.0 / rn) * rc;
        c.p_x = center_ + radius_ * outward;
        c.nu = -1.0 * outward;
    } else {
        // Inward normal from central differences of the inside distance.
        const double step = 1e-6 * std::max(1.0, inradius_);
        Vec3 g;
        for (int k = 0; k < 3; ++k) {
            Vec3 xp = x, xm = x;
            xp[k] += step;
            xm[k] -= step;
            g[k] = (boundary_distance(xp) - boundary_distance(xm)) / (2 * step);
        }
        const double gn = norm(g);
        if (gn < 1e-12) throw std::domain_error("outside-collar: degenerate distance gradient");
        c.nu = (1.0 / gn) * g;
        c.p_x = x - d * c.nu;
        // One Newton refinement of the projection along nu.
        const double resid = boundary_distance(c.p_x);
        c.p_x = c.p_x - resid * c.nu;
    }
    c.x_bar = x - (2.0 * d) * c.nu;
    return c;
}

void DomainModel::declare_reflection_symmetry(int axis, double plane_coord) {
    if (axis < 0 || axis > 2) throw std::invalid_argument("invalid-domain: reflection axis");
    reflections_.emplace_back(axis, plane_coord);
}

bool DomainModel::check_reflection_symmetry(int axis, double plane_coord, int samples,
                                            unsigned seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(bbox_.lo[0], bbox_.hi[0]);
    std::uniform_real_distribution<double> uy(bbox_.lo[1], bbox_.hi[1]);
    std::uniform_real_distribution<double> uz(bbox_.lo[2], bbox_.hi[2]);
    const double tol = 1e-9 * std::max(1.0, inradius_);
    for (int i = 0; i < samples; ++i) {
        Vec3 x{ux(rng), uy(rng), uz(rng)};
        Vec3 xr = x;
        xr[axis] = 2 * plane_coord - x[axis];
        if (std::abs(boundary_distance(x) - boundary_distance(xr)) > tol) return false;
    }
    return true;
}

double critical_exponent(int N, int k) {
    if (N - k < 3) throw std::invalid_argument("invalid-codimension: N-k >= 3 required");
    return 2.0 * (N - k) / (N - k - 2);
}

SymmetrySpec::SymmetrySpec(std::vector<int> k_list_, int N_) : k_list(std::move(k_list_)), N(N_) {
    for (int ki : k_list)
        if (ki < 1) throw std::invalid_argument("invalid-symmetry: k_i >= 1 required");
    if (k() > N - 3) throw std::invalid_argument("invalid-symmetry: k <= N-3 required");
}

int SymmetrySpec::k() const {
    int s = 0;
    for (int ki : k_list) s += ki;
    return s;
}

WeightField constant_weight() {
    WeightField w;
    w.id = "const";
    w.value = [](const Vec3&) { return 1.0; };
    w.gradient = [](const Vec3&) { return Vec3{0, 0, 0}; };
    w.hessian = [](const Vec3&) { return std::array<double, 9>{}; };
    return w;
}

WeightField monomial_weight(const std::vector<int>& k_list, const DomainModel& dom) {
    const int m = int(k_list.size());
    if (m < 1 || m > 3) throw std::invalid_argument("invalid-symmetry: monomial weight needs 1..3 factors");
    for (int i = 0; i < m; ++i)
        if (dom.bounding_box().lo[i] <= 0.0)
            throw std::domain_error("weight-degenerate: domain touches {x_" + std::to_string(i + 1) +
                                    " = 0}");
    WeightField w;
    w.id = "monomial(";
    for (int i = 0; i < m; ++i) w.id += (i ? "," : "") + std::to_string(k_list[i]);
    w.id += ")";
    std::vector<int> ks = k_list;
    w.value = [ks, m](const Vec3& x) {
        double v = 1.0;
        for (int i = 0; i < m; ++i) v *= std::pow(x[i], ks[i]);
        return v;
    };
    w.gradient = [ks, m](const Vec3& x) {
        double v = 1.0;
        for (int i = 0; i < m; ++i) v *= std::pow(x[i], ks[i]);
        Vec3 g{0, 0, 0};
        for (int i = 0; i < m; ++i) g[i] = ks[i] * v / x[i];
        return g;
    };
    w.hessian = [ks, m](const Vec3& x) {
        double v = 1.0;
        for (int i = 0; i < m; ++i) v *= std::pow(x[i], ks[i]);
        std::array<double, 9> h{};
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                if (i == j)
                    h[3 * i + j] = ks[i] * (ks[i] - 1) * v / (x[i] * x[i]);
                else
                    h[3 * i + j] = ks[i] * ks[j] * v / (x[i] * x[j]);
            }
        return h;
    };
    return w;
}

WeightField monomial_weight(const SymmetrySpec& spec, const DomainModel& dom) {
    return monomial_weight(spec.k_list, dom);
}

double lift_to_invariant(const std::function<double(std::span<const double>)>& u,
                         std::span<const double> y, const SymmetrySpec& spec,
                         const DomainModel& cross_section) {
    if (int(y.size()) != spec.N) throw std::invalid_argument("invalid-point: y must have dimension N");
    if (spec.n() != 3) throw std::invalid_argument("invalid-symmetry: cross-section dimension must be 3");
    std::vector<double> profile(spec.n());
    int off = 0;
    for (int i = 0; i < spec.m(); ++i) {
        double s = 0;
        for (int j = 0; j < spec.k_list[i] + 1; ++j) s += y[off + j] * y[off + j];
        profile[i] = std::sqrt(s);
        off += spec.k_list[i] + 1;
    }
    for (int j = spec.m(); j < spec.n(); ++j) profile[j] = y[off++];
    const Vec3 x{profile[0], profile[1], profile[2]};
    if (cross_section.boundary_distance(x) < -1e-9 * std::max(1.0, cross_section.inradius()))
        throw std::domain_error("outside-domain: radial profile point outside the cross-section");
    return u(profile);
}

}  // namespace concentra::geom
