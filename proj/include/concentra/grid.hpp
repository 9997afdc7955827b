// Masked Cartesian discretization of -div(a grad .) with cut-cell Dirichlet arms,
// weighted norms/quadratures, and the Krylov solvers used throughout.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "concentra/geometry.hpp"
#include "concentra/util.hpp"

namespace concentra::fd {

// Weight-independent grid data shared between the weighted and unweighted operators.
class GridGeometry {
  public:
    GridGeometry(std::shared_ptr<const geom::DomainModel> domain, int nodes_per_axis,
                 double pad_fraction = 0.02);

    std::shared_ptr<const geom::DomainModel> domain;
    int nx = 0, ny = 0, nz = 0;
    double h = 0.0;
    Vec3 origin{};  // position of cell (0,0,0)
    int n_interior = 0;

    struct Arm {
        std::int32_t nb = -1;  // interior neighbor index, or -1 when the arm is cut
        double theta = 1.0;    // fraction of h to the boundary along the arm (cut arms)
    };

    std::vector<std::int32_t> node_of_cell;        // size nx*ny*nz, -1 outside
    std::vector<std::array<std::int32_t, 3>> ijk;  // per interior node
    std::vector<std::array<Arm, 6>> arms;          // -x,+x,-y,+y,-z,+z
    std::vector<double> vol_weight;                // cut-cell volume per node (includes h^3)

    Vec3 position(int node) const {
        const auto& c = ijk[node];
        return {origin[0] + h * c[0], origin[1] + h * c[1], origin[2] + h * c[2]};
    }
    Vec3 cell_position(int ix, int iy, int iz) const {
        return {origin[0] + h * ix, origin[1] + h * iy, origin[2] + h * iz};
    }
    std::int64_t cell_index(int ix, int iy, int iz) const {
        return (std::int64_t(iz) * ny + iy) * nx + ix;
    }
    int node_at(int ix, int iy, int iz) const {
        if (ix < 0 || iy < 0 || iz < 0 || ix >= nx || iy >= ny || iz >= nz) return -1;
        return node_of_cell[std::size_t(cell_index(ix, iy, iz))];
    }
    // Cut point of an arm (node, dir).
    Vec3 cut_point(int node, int dir) const;
};

struct SolveReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

class Discretization;

struct GridField {
    std::shared_ptr<const Discretization> disc;
    std::vector<double> v;

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

// The weighted operator A ~ -div(a grad .) with homogeneous Dirichlet data, SPD.
class Discretization : public std::enable_shared_from_this<Discretization> {
  public:
    Discretization(std::shared_ptr<const GridGeometry> geometry, geom::WeightField weight);

    static std::shared_ptr<Discretization> create(std::shared_ptr<const geom::DomainModel> dom,
                                                  const geom::WeightField& weight,
                                                  int nodes_per_axis, double pad_fraction = 0.02);
    // Sibling operator on the same grid with a different weight.
    std::shared_ptr<Discretization> with_weight(const geom::WeightField& weight) const;

    const GridGeometry& geom() const { return *geom_; }
    std::shared_ptr<const GridGeometry> geometry_ptr() const { return geom_; }
    const geom::WeightField& weight() const { return weight_; }
    int size() const { return geom_->n_interior; }
    double h() const { return geom_->h; }
    const std::vector<double>& node_weight() const { return a_node_; }
    const std::vector<double>& diagonal() const { return diag_; }

    void apply(std::span<const double> u, std::span<double> y) const;
    std::vector<double> apply(std::span<const double> u) const;

    // Right-hand side induced by inhomogeneous Dirichlet data g on the cut points.
    std::vector<double> boundary_rhs(const std::function<double(const Vec3&)>& g) const;

    // CG with Jacobi preconditioner; relative tolerance in the preconditioned residual.
    std::vector<double> solve(std::span<const double> b, double rel_tol = 1e-10,
                              int max_iter = 20000, SolveReport* report = nullptr) const;

    // Solve -div(a grad v) = 0 with v = g on the boundary (a-harmonic extension of g).
    std::vector<double> dirichlet_extension(const std::function<double(const Vec3&)>& g,
                                            double rel_tol = 1e-10,
                                            SolveReport* report = nullptr) const;

    // Adjoint-embedding solve: -div(a grad v) = a u, v = 0 on the boundary.
    GridField i_star(std::span<const double> u, double rel_tol = 1e-10,
                     SolveReport* report = nullptr) const;

    // Weighted H^1_0 inner product (u, v) = int a grad u . grad v, realized as h^3 u^T A v.
    double inner(std::span<const double> u, std::span<const double> v) const;
    double norm(std::span<const double> u) const;
    // || i_star(r/a) || — the dual norm used for solver stopping tests.
    double dual_norm(std::span<const double> r) const;
    // Weighted Lr norm with cut-cell volume weights.
    double norm_Lr(std::span<const double> u, double r) const;
    // Plain quadrature of nodal values with cut-cell volume weights.
    double quadrature(std::span<const double> integrand) const;

    // Discrete Dirichlet energy int a |grad u|^2 of a field whose boundary trace is g
    // (the quadratic form of A corrected for inhomogeneous data on the cut arms).
    double dirichlet_energy_with_boundary(std::span<const double> u,
                                          const std::function<double(const Vec3&)>& g) const;

    GridField sample(const std::function<double(const Vec3&)>& f) const;
    GridField zero_field() const;

    // Trilinear interpolation; exterior stencil values fall back to boundary_value(x_cut)
    // when provided, else 0 (Dirichlet fields).
    double interpolate(std::span<const double> u, const Vec3& x) const;

    // Nodal gradient by centered/one-sided arm differences; cut arms use g as the
    // boundary value when given (default 0).
    std::array<std::vector<double>, 3> gradient(
        std::span<const double> u, const std::function<double(const Vec3&)>* g = nullptr) const;

  private:
    std::shared_ptr<const GridGeometry> geom_;
    geom::WeightField weight_;
    std::vector<double> a_node_;
    std::vector<double> diag_;
    std::vector<std::array<double, 6>> coef_;      // interior-arm coefficients
    std::vector<std::array<double, 6>> cut_coef_;  // cut-arm coefficients (0 if interior)
};

// --- Krylov solvers on generic symmetric operators -------------------------------

using LinOp = std::function<void(std::span<const double>, std::span<double>)>;

// Preconditioned CG; jacobi may be empty.
SolveReport cg(const LinOp& A, std::span<const double> b, std::vector<double>& x, double rel_tol,
               int max_iter, std::span<const double> jacobi = {});

// Preconditioned MINRES for symmetric (possibly indefinite) systems; jacobi must be positive.
SolveReport minres(const LinOp& A, std::span<const double> b, std::vector<double>& x,
                   double rel_tol, int max_iter, std::span<const double> jacobi = {});

// --- Field serialization ----------------------------------------------------------

// JSON header line + '\n' + raw little-endian float64 payload.
void save_field(const GridField& f, const std::string& path, const std::string& field_id);
std::vector<double> load_field(const std::string& path, std::string* header_json = nullptr);

// CSV line profile along a coordinate axis through a point.
void export_line_profile(const GridField& f, const Vec3& through, int axis,
                         const std::string& path);

}  // namespace concentra::fd
