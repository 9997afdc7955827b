// Configuration space Lambda, the multi-bubble ansatz V, kernel space K and projectors,
// the discrete correction phi, coercivity diagnostics, and the reduced energy evaluator.
#pragma once

#include <memory>
#include <vector>

#include "concentra/elliptic.hpp"
#include "concentra/grid.hpp"

namespace concentra::ansatz {

enum class Mode { Separated, Tower };

struct ConcentrationConfig {
    Mode mode = Mode::Separated;
    std::vector<Vec3> anchors;  // boundary anchors s_i; a single xi_0 for towers
    std::vector<double> d;      // dilation factors d_i > 0
    std::vector<double> t;      // normal offsets t_i > 0 (strictly increasing for towers)
    std::vector<int> signs;     // lambda_i in {0,1}, separated mode only

    int peaks() const { return int(d.size()); }
    void validate(const geom::DomainModel& dom) const;  // throws invalid-configuration
};

struct BubbleInstance {
    bubble::BubbleParams params;
    double sign;  // (-1)^{lambda_i} or (-1)^{i+1}
    Vec3 anchor;
    Vec3 nu;           // inward unit normal at the anchor
    double offset;     // eps * t_i
    double dist_bnd;   // distance of xi to the boundary
};

struct AnsatzState {
    std::shared_ptr<const fd::Discretization> disc;       // weighted operator
    std::shared_ptr<const fd::Discretization> unit_disc;  // same grid, weight = 1
    ConcentrationConfig config;
    double eps = 0.0;
    double p = 6.0;
    std::vector<BubbleInstance> bubbles;
    std::vector<fd::ProjectedBubble> proj;  // U samples, harmonic part, PU per bubble
    fd::GridField V;

    // Kernel basis P psi_i^j, normalized in the weighted norm, with cached A-images.
    std::vector<fd::GridField> kernel;
    std::vector<std::vector<double>> kernel_Aimg;
    std::vector<fd::ProjectedBubble> kernel_raw;  // unnormalized psi samples + harmonic parts
    std::vector<double> gram;  // row-major, normalized basis
    double gram_condition = 1.0;

    bool resolution_limited = false;  // max delta_i < 4h
    const fd::ReflectionSet* reflections = nullptr;

    int kernel_size() const { return int(kernel.size()); }
};

AnsatzState build_ansatz(std::shared_ptr<const fd::Discretization> disc,
                         const ConcentrationConfig& config, double eps,
                         const fd::ReflectionSet* reflections = nullptr);

// w minus its weighted-orthogonal projection onto span{P psi_i^j}.
fd::GridField project_out_kernel(const AnsatzState& st, const fd::GridField& w);

// Pi^perp (V - i*[f_eps(V)]) assembled with the bubble self-terms eliminated analytically,
// so the accuracy does not hinge on resolving delta on the grid.
fd::GridField residual_field(const AnsatzState& st);
double residual_norm(const AnsatzState& st);

// Plain discrete residual ||u - i*(f_eps(u))|| of a raw field (no kernel projection).
double discrete_residual_norm(const AnsatzState& st, std::span<const double> u);

struct CorrectionResult {
    fd::GridField phi;
    double norm = 0.0;
    int iterations = 0;
    double final_residual = 0.0;           // || Pi^perp(V+phi - i* f_eps(V+phi)) ||
    double max_orthogonality_defect = 0.0; // max_m |(phi, k_m)| / ||phi|| over all iterates
    bool converged = false;
};

// Solves (es1) for phi in K^perp: one Picard sweep then projected Newton steps.
CorrectionResult solve_correction(const AnsatzState& st, double tol = 1e-8, int max_iter = 25);

// Smallest singular value of L = I - Pi^perp i*[f'(V) .] on K^perp (or of the unprojected
// operator when use_kernel_projection is false), via Lanczos on the compact part. The
// unprojected estimate is additionally capped by the kernel Rayleigh bound below, which
// sees the near-zero modes even when delta is below the grid scale.
double coercivity_estimate(const AnsatzState& st, bool use_kernel_projection = true,
                           int lanczos_steps = 40);

// min_j |(v_j, L0 v_j)| / ||v_j||^2 over the kernel vectors v_j = P psi^j, evaluated by
// two-level quadrature (radial moments for the bubble cores, grid for the rest). An
// upper bound for the smallest singular value of the unprojected operator.
double kernel_rayleigh_bound(const AnsatzState& st);

struct EnergyBreakdown {
    double dirichlet = 0.0;   // int a |grad u|^2
    double potential = 0.0;   // int a |u|^{p-eps}
    double value = 0.0;       // J_eps
};

// J_eps(V + phi) by two-level quadrature: radial moments of the closed-form bubbles plus
// grid quadrature of the smooth remainder. Ball domains only (boundary integrals use a
// product Gauss rule on the sphere).
double reduced_energy_numeric(const AnsatzState& st, const fd::GridField& phi,
                              EnergyBreakdown* breakdown = nullptr);

// Direct all-grid J_eps(u) for resolved fields; oracle for the two-level evaluator.
double energy_direct(const AnsatzState& st, std::span<const double> u);

}  // namespace concentra::ansatz
