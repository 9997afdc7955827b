#include "concentra/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace concentra::fd {

namespace {

constexpr int kAxisOf[6] = {0, 0, 1, 1, 2, 2};
constexpr int kSignOf[6] = {-1, +1, -1, +1, -1, +1};

double bisect_cut(const geom::DomainModel& dom, const Vec3& inside, const Vec3& axis_step) {
    // d(inside) > 0, d(inside + axis_step) <= 0; returns theta in (0, 1].
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Vec3 x = inside + mid * axis_step;
        if (dom.boundary_distance(x) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

GridGeometry::GridGeometry(std::shared_ptr<const geom::DomainModel> domain_, int nodes_per_axis,
                           double pad_fraction) {
    domain = std::move(domain_);
    if (nodes_per_axis < 5) throw std::invalid_argument("grid: need at least 5 nodes per axis");
    const auto& bb = domain->bounding_box();
    double extent = 0.0;
    Vec3 center = 0.5 * (bb.lo + bb.hi);
    for (int d = 0; d < 3; ++d) extent = std::max(extent, bb.hi[d] - bb.lo[d]);
    const double L = extent * (1.0 + 2.0 * pad_fraction);
    nx = ny = nz = nodes_per_axis;
    h = L / (nodes_per_axis - 1);
    origin = center - Vec3{0.5 * L, 0.5 * L, 0.5 * L};

    node_of_cell.assign(std::size_t(nx) * ny * nz, -1);
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const Vec3 x = cell_position(ix, iy, iz);
                if (domain->boundary_distance(x) > 0.0) {
                    node_of_cell[std::size_t(cell_index(ix, iy, iz))] = n_interior++;
                    ijk.push_back({std::int32_t(ix), std::int32_t(iy), std::int32_t(iz)});
                }
            }

    arms.resize(n_interior);
    vol_weight.resize(n_interior);
    for (int node = 0; node < n_interior; ++node) {
        const auto& c = ijk[node];
        const Vec3 x = position(node);
        double cellvol = 1.0;
        for (int d = 0; d < 6; ++d) {
            const int ax = kAxisOf[d], sg = kSignOf[d];
            const int jx = c[0] + (ax == 0 ? sg : 0);
            const int jy = c[1] + (ax == 1 ? sg : 0);
            const int jz = c[2] + (ax == 2 ? sg : 0);
            Arm arm;
            arm.nb = node_at(jx, jy, jz);
            if (arm.nb < 0) {
                Vec3 step{0, 0, 0};
                step[ax] = sg * h;
                arm.theta = bisect_cut(*domain, x, step);
                if (arm.theta < 1e-8)
                    throw std::runtime_error("stencil-degenerate: cut distance below 1e-8 h");
            }
            arms[node][d] = arm;
            if (d % 2 == 1) {
                const double tm = arms[node][d - 1].nb >= 0 ? 1.0 : arms[node][d - 1].theta;
                const double tp = arm.nb >= 0 ? 1.0 : arm.theta;
                cellvol *= 0.5 * (tm + tp);
            }
        }
        vol_weight[node] = cellvol * h * h * h;
    }
}

Vec3 GridGeometry::cut_point(int node, int dir) const {
    const auto& arm = arms[node][dir];
    Vec3 x = position(node);
    x[kAxisOf[dir]] += kSignOf[dir] * arm.theta * h;
    return x;
}

Discretization::Discretization(std::shared_ptr<const GridGeometry> geometry,
                               geom::WeightField weight)
    : geom_(std::move(geometry)), weight_(std::move(weight)) {
    const auto& g = *geom_;
    const int n = g.n_interior;
    const double h = g.h, h2 = h * h;
    a_node_.resize(n);
    diag_.assign(n, 0.0);
    coef_.assign(n, {});
    cut_coef_.assign(n, {});
    for (int i = 0; i < n; ++i) a_node_[i] = weight_.value(g.position(i));
    for (int i = 0; i < n; ++i) {
        const Vec3 x = g.position(i);
        for (int d = 0; d < 6; ++d) {
            const auto& arm = g.arms[i][d];
            const int ax = kAxisOf[d], sg = kSignOf[d];
            if (arm.nb >= 0) {
                if (sg < 0) continue;  // symmetric arm handled from the lower-index side
                Vec3 mid = x;
                mid[ax] += 0.5 * h;
                const double c = weight_.value(mid) / h2;
                coef_[i][d] = c;
                coef_[arm.nb][d - 1] = c;
                diag_[i] += c;
                diag_[arm.nb] += c;
            } else {
                Vec3 mid = x;
                mid[ax] += sg * 0.5 * arm.theta * h;
                const double c = weight_.value(mid) / (arm.theta * h2);
                cut_coef_[i][d] = c;
                diag_[i] += c;
            }
        }
    }
}

std::shared_ptr<Discretization> Discretization::create(
    std::shared_ptr<const geom::DomainModel> dom, const geom::WeightField& weight,
    int nodes_per_axis, double pad_fraction) {
    auto gg = std::make_shared<GridGeometry>(std::move(dom), nodes_per_axis, pad_fraction);
    return std::make_shared<Discretization>(std::move(gg), weight);
}

std::shared_ptr<Discretization> Discretization::with_weight(const geom::WeightField& weight) const {
    return std::make_shared<Discretization>(geom_, weight);
}

void Discretization::apply(std::span<const double> u, std::span<double> y) const {
    const auto& g = *geom_;
    const int n = g.n_interior;
    for (int i = 0; i < n; ++i) {
        double s = diag_[i] * u[i];
        const auto& arm = g.arms[i];
        const auto& cf = coef_[i];
        for (int d = 0; d < 6; ++d)
            if (arm[d].nb >= 0) s -= cf[d] * u[arm[d].nb];
        y[i] = s;
    }
}

std::vector<double> Discretization::apply(std::span<const double> u) const {
    std::vector<double> y(u.size());
    apply(u, y);
    return y;
}

std::vector<double> Discretization::boundary_rhs(
    const std::function<double(const Vec3&)>& g) const {
    const auto& gg = *geom_;
    std::vector<double> b(gg.n_interior, 0.0);
    for (int i = 0; i < gg.n_interior; ++i)
        for (int d = 0; d < 6; ++d)
            if (gg.arms[i][d].nb < 0) b[i] += cut_coef_[i][d] * g(gg.cut_point(i, d));
    return b;
}

SolveReport cg(const LinOp& A, std::span<const double> b, std::vector<double>& x, double rel_tol,
               int max_iter, std::span<const double> jacobi) {
    const std::size_t n = b.size();
    if (x.size() != n) x.assign(n, 0.0);
    std::vector<double> r(n), z(n), p(n), q(n);
    A(x, q);
    double bnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - q[i];
        bnorm += b[i] * b[i];
    }
    bnorm = std::sqrt(bnorm);
    SolveReport rep;
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        rep.converged = true;
        return rep;
    }
    auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (jacobi.empty())
            out = in;
        else
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] / jacobi[i];
    };
    precond(r, z);
    p = z;
    double rz = dot(r, z);
    for (int it = 0; it < max_iter; ++it) {
        A(p, q);
        const double pq = dot(p, q);
        if (pq <= 0.0) throw std::runtime_error("solver-failure: CG lost positive definiteness");
        const double alpha = rz / pq;
        double rn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rn += r[i] * r[i];
        }
        rep.iterations = it + 1;
        rep.relative_residual = std::sqrt(rn) / bnorm;
        if (rep.relative_residual <= rel_tol) {
            rep.converged = true;
            return rep;
        }
        precond(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return rep;
}

SolveReport minres(const LinOp& A, std::span<const double> b, std::vector<double>& x,
                   double rel_tol, int max_iter, std::span<const double> jacobi) {
    const std::size_t n = b.size();
    if (x.size() != n) x.assign(n, 0.0);
    auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
        out.resize(n);
        if (jacobi.empty())
            out = in;
        else
            for (std::size_t i = 0; i < n; ++i) out[i] = in[i] / jacobi[i];
    };

    std::vector<double> r1(n), r2(n), y(n), v(n), w(n, 0.0), w1(n, 0.0), w2(n, 0.0), tmp(n);
    A(x, tmp);
    for (std::size_t i = 0; i < n; ++i) r1[i] = b[i] - tmp[i];
    precond(r1, y);
    double beta1 = dot(r1, y);
    SolveReport rep;
    if (beta1 < 0) throw std::runtime_error("solver-failure: MINRES preconditioner not SPD");
    if (beta1 == 0) {
        rep.converged = true;
        return rep;
    }
    beta1 = std::sqrt(beta1);
    double oldb = 0, beta = beta1, dbar = 0, epsln = 0, phibar = beta1;
    double cs = -1, sn = 0, oldeps = 0;
    r2 = r1;
    for (int it = 0; it < max_iter; ++it) {
        const double s = 1.0 / beta;
        for (std::size_t i = 0; i < n; ++i) v[i] = s * y[i];
        A(v, tmp);
        if (it >= 1)
            for (std::size_t i = 0; i < n; ++i) tmp[i] -= (beta / oldb) * r1[i];
        const double alfa = dot(v, tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] -= (alfa / beta) * r2[i];
        r1 = r2;
        r2 = tmp;
        precond(r2, y);
        oldb = beta;
        const double beta2 = dot(r2, y);
        if (beta2 < 0) throw std::runtime_error("solver-failure: MINRES breakdown");
        beta = std::sqrt(beta2);
        oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        double gamma = std::sqrt(gbar * gbar + beta * beta);
        gamma = std::max(gamma, 1e-300);
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;
        w1 = w2;
        w2 = w;
        for (std::size_t i = 0; i < n; ++i)
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        for (std::size_t i = 0; i < n; ++i) x[i] += phi * w[i];
        rep.iterations = it + 1;
        rep.relative_residual = phibar / beta1;
        if (rep.relative_residual <= rel_tol) {
            rep.converged = true;
            return rep;
        }
    }
    return rep;
}

std::vector<double> Discretization::solve(std::span<const double> b, double rel_tol, int max_iter,
                                          SolveReport* report) const {
    std::vector<double> x;
    LinOp op = [this](std::span<const double> u, std::span<double> out) { apply(u, out); };
    SolveReport rep = cg(op, b, x, rel_tol, max_iter, diag_);
    if (!rep.converged) throw std::runtime_error("solver-failure: CG did not converge");
    if (report) *report = rep;
    return x;
}

std::vector<double> Discretization::dirichlet_extension(
    const std::function<double(const Vec3&)>& g, double rel_tol, SolveReport* report) const {
    return solve(boundary_rhs(g), rel_tol, 20000, report);
}

GridField Discretization::i_star(std::span<const double> u, double rel_tol,
                                 SolveReport* report) const {
    std::vector<double> b(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) b[i] = a_node_[i] * u[i];
    GridField f;
    f.disc = shared_from_this();
    f.v = solve(b, rel_tol, 20000, report);
    return f;
}

double Discretization::inner(std::span<const double> u, std::span<const double> v) const {
    std::vector<double> av(v.size());
    apply(v, av);
    const double h = geom_->h;
    return h * h * h * dot(u, av);
}

double Discretization::norm(std::span<const double> u) const {
    return std::sqrt(std::max(0.0, inner(u, u)));
}

double Discretization::dual_norm(std::span<const double> r) const {
    const auto e = solve(r, 1e-12, 40000);
    const double h = geom_->h;
    return std::sqrt(std::max(0.0, h * h * h * dot(e, r)));
}

double Discretization::norm_Lr(std::span<const double> u, double r) const {
    double s = 0.0;
    for (int i = 0; i < size(); ++i)
        s += a_node_[i] * std::pow(std::abs(u[i]), r) * geom_->vol_weight[i];
    return std::pow(s, 1.0 / r);
}

double Discretization::quadrature(std::span<const double> integrand) const {
    double s = 0.0;
    for (int i = 0; i < size(); ++i) s += integrand[i] * geom_->vol_weight[i];
    return s;
}

double Discretization::dirichlet_energy_with_boundary(
    std::span<const double> u, const std::function<double(const Vec3&)>& g) const {
    const auto& gg = *geom_;
    const double h = gg.h;
    std::vector<double> au(u.size());
    apply(u, au);
    double e = dot(u, au);
    for (int i = 0; i < gg.n_interior; ++i)
        for (int d = 0; d < 6; ++d)
            if (gg.arms[i][d].nb < 0 && cut_coef_[i][d] != 0.0) {
                const double gc = g(gg.cut_point(i, d));
                e += cut_coef_[i][d] * (gc * gc - 2.0 * gc * u[i]);
            }
    return h * h * h * e;
}

GridField Discretization::sample(const std::function<double(const Vec3&)>& f) const {
    GridField out;
    out.disc = shared_from_this();
    out.v.resize(size());
    for (int i = 0; i < size(); ++i) out.v[i] = f(geom_->position(i));
    return out;
}

GridField Discretization::zero_field() const {
    GridField out;
    out.disc = shared_from_this();
    out.v.assign(size(), 0.0);
    return out;
}

double Discretization::interpolate(std::span<const double> u, const Vec3& x) const {
    const auto& g = *geom_;
    double f[3];
    int i0[3];
    for (int d = 0; d < 3; ++d) {
        const double t = (x[d] - g.origin[d]) / g.h;
        i0[d] = int(std::floor(t));
        f[d] = t - i0[d];
    }
    double val = 0.0;
    for (int cz = 0; cz < 2; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
                const int node = g.node_at(i0[0] + cx, i0[1] + cy, i0[2] + cz);
                const double uv = node >= 0 ? u[node] : 0.0;
                const double wgt = (cx ? f[0] : 1 - f[0]) * (cy ? f[1] : 1 - f[1]) *
                                   (cz ? f[2] : 1 - f[2]);
                val += wgt * uv;
            }
    return val;
}

std::array<std::vector<double>, 3> Discretization::gradient(
    std::span<const double> u, const std::function<double(const Vec3&)>* g) const {
    const auto& gg = *geom_;
    const int n = gg.n_interior;
    const double h = gg.h;
    std::array<std::vector<double>, 3> out;
    for (auto& c : out) c.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int ax = 0; ax < 3; ++ax) {
            const auto& am = gg.arms[i][2 * ax];
            const auto& ap = gg.arms[i][2 * ax + 1];
            const double xm = am.nb >= 0 ? -h : -am.theta * h;
            const double xp = ap.nb >= 0 ? h : ap.theta * h;
            const double um = am.nb >= 0 ? u[am.nb] : (g ? (*g)(gg.cut_point(i, 2 * ax)) : 0.0);
            const double up = ap.nb >= 0 ? u[ap.nb] : (g ? (*g)(gg.cut_point(i, 2 * ax + 1)) : 0.0);
            // Three-point derivative at 0 with nodes (xm, 0, xp).
            const double u0 = u[i];
            out[ax][i] = um * xp / (xm * (xm - xp)) + u0 * (-xm - xp) / (-xm * xp) +
                         up * xm / (xp * (xp - xm));
        }
    }
    return out;
}

void save_field(const GridField& f, const std::string& path, const std::string& field_id) {
    const auto& g = f.disc->geom();
    nlohmann::json hdr;
    hdr["format"] = "concentra-field";
    hdr["version"] = 1;
    hdr["dims"] = {g.nx, g.ny, g.nz};
    hdr["h"] = g.h;
    hdr["domain"] = g.domain->id();
    hdr["weight"] = f.disc->weight().id;
    hdr["count"] = f.v.size();
    hdr["field"] = field_id;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("io-error: cannot open " + path);
    const std::string line = hdr.dump();
    out.write(line.data(), std::streamsize(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(f.v.data()),
              std::streamsize(f.v.size() * sizeof(double)));
}

std::vector<double> load_field(const std::string& path, std::string* header_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("io-error: cannot open " + path);
    std::string line;
    std::getline(in, line);
    const auto hdr = nlohmann::json::parse(line);
    if (header_json) *header_json = line;
    const std::size_t count = hdr.at("count").get<std::size_t>();
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(double)));
    if (!in) throw std::runtime_error("io-error: truncated field file " + path);
    return v;
}

void export_line_profile(const GridField& f, const Vec3& through, int axis,
                         const std::string& path) {
    const auto& g = f.disc->geom();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("io-error: cannot open " + path);
    out << "coord,value\n";
    int idx[3];
    for (int d = 0; d < 3; ++d)
        idx[d] = int(std::lround((through[d] - g.origin[d]) / g.h));
    const int nmax = axis == 0 ? g.nx : axis == 1 ? g.ny : g.nz;
    out.precision(17);
    for (int k = 0; k < nmax; ++k) {
        int c[3] = {idx[0], idx[1], idx[2]};
        c[axis] = k;
        const int node = g.node_at(c[0], c[1], c[2]);
        const Vec3 x = g.cell_position(c[0], c[1], c[2]);
        out << x[axis] << "," << (node >= 0 ? f.v[node] : 0.0) << "\n";
    }
}

}  // namespace concentra::fd
