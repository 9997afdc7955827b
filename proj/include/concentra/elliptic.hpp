// Nonlinear layer over the discretization: f_eps, bubble projection PW, damped Newton,
// reflection symmetrization, and linearized-spectrum diagnostics.
#pragma once

#include <optional>
#include <vector>

#include "concentra/bubble.hpp"
#include "concentra/grid.hpp"

namespace concentra::fd {

// f_eps(s) = |s|^{p-2-eps} s with p = 2n/(n-2); odd in s.
double f_eps(double s, double p, double eps);
double f_eps_prime(double s, double p, double eps);

struct ProjectedBubble {
    bubble::BubbleParams params;
    GridField u_samples;  // exact nodal samples of U
    GridField harmonic;   // discrete harmonic extension of U's boundary trace
    GridField pu;         // P U = U - harmonic
};

// PW projection: harmonic correction of the sampled bubble on the unit-weight operator.
// disc must carry the constant weight; throws outside-domain if the center leaves Omega.
ProjectedBubble project_bubble(const std::shared_ptr<const Discretization>& unit_disc,
                               const bubble::BubbleParams& b);

// Same construction for the parameter derivatives psi^j, j = 0..n.
ProjectedBubble project_bubble_derivative(const std::shared_ptr<const Discretization>& unit_disc,
                                          const bubble::BubbleParams& b, int j);

// Reflections through lattice-aligned planes {x_axis = plane}; used for the (a2) class.
class ReflectionSet {
  public:
    ReflectionSet(const GridGeometry& g, const std::vector<std::pair<int, double>>& planes);
    // Replace u by its average over the generated reflection group.
    void symmetrize(std::span<double> u) const;
    bool empty() const { return maps_.empty(); }

  private:
    std::vector<std::vector<std::int32_t>> maps_;  // mirrored node index per reflection
};

struct NewtonOptions {
    double dual_tol = 1e-9;
    int max_iterations = 50;
    int max_damping_halvings = 8;
    double linear_rel_tol = 1e-10;
    int linear_max_iter = 20000;
};

struct NewtonResult {
    GridField u;
    int iterations = 0;
    std::vector<double> residual_history;  // weighted dual norms
    bool converged = false;
    bool trivial = false;  // converged to the zero field
};

NewtonResult newton_solve(const std::shared_ptr<const Discretization>& disc, double eps,
                          const GridField& u0, const ReflectionSet* symmetrize = nullptr,
                          const NewtonOptions& opts = {});

// Residual dual norm || A u - a f_eps(u) ||_* of a raw field.
double residual_dual_norm(const Discretization& disc, std::span<const double> u, double eps);

// Smallest `count` eigenvalues of -div(a grad v) - (p-1-eps) a |u|^{p-2-eps} v = lambda a v,
// by shift-inverted Lanczos on the SPD-shifted pencil.
std::vector<double> linearized_spectrum(const std::shared_ptr<const Discretization>& disc,
                                        std::span<const double> u, double eps, int count);

}  // namespace concentra::fd
