// The finite-dimensional model: gamma constants, assembled expansion coefficients,
// the separated/tower energy expansions, and critical-point search.
#pragma once

#include <string>
#include <vector>

#include "concentra/ansatz.hpp"
#include "concentra/geometry.hpp"

namespace concentra::reduced {

struct GammaConstants {
    double gamma1 = 0, gamma2 = 0, gamma3 = 0;
    int n = 3;
};

// (g1)-(g3) by adaptive quadrature after reduction to 1-D radial integrals.
GammaConstants gamma_constants(int n);

struct ReducedModel {
    GammaConstants gammas;
    double c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0, c6 = 0;
    std::vector<std::string> provenance;  // gamma-expression per coefficient
    int n = 3;
    double p = 6;
};

// Term-matching of the appendix expansions; aborts if c4, c5 or c6 comes out nonpositive.
ReducedModel assemble_coefficients(const GammaConstants& g);

struct AnchorData {
    double a = 1;      // a(s_i)
    double g = 1;      // <grad a(s_i), nu(s_i)>
};

// (eq1-pro4-1) for a separated configuration.
double expansion_separated(const ReducedModel& model, const std::vector<AnchorData>& anchors,
                           const std::vector<double>& d, const std::vector<double>& t,
                           double eps);
// Gradient in (d_1..,t_1..) order.
std::vector<double> expansion_separated_gradient(const ReducedModel& model,
                                                 const std::vector<AnchorData>& anchors,
                                                 const std::vector<double>& d,
                                                 const std::vector<double>& t, double eps);

// Psi(d, t) of (psi) for a tower at xi_0; throws singular-configuration on t_i collisions.
double psi_tower(const ReducedModel& model, const AnchorData& anchor,
                 const std::vector<double>& d, const std::vector<double>& t);
std::vector<double> psi_tower_gradient(const ReducedModel& model, const AnchorData& anchor,
                                       const std::vector<double>& d, const std::vector<double>& t);

// Tower expansion: l (c1 + c2 e log e + c3 e) a(xi0) + e Psi(d,t).
double expansion_tower(const ReducedModel& model, const AnchorData& anchor,
                       const std::vector<double>& d, const std::vector<double>& t, double eps);

struct MinimizeResult {
    std::vector<double> d;
    std::vector<double> t;
    double value = 0;
    std::vector<double> hessian_eigenvalues;  // in log coordinates, all > 0 at a minimizer
    double gradient_norm = 0;
    int multistart_hits = 0;
};

// Interior minimizer of the epsilon-bracket by damped Newton in log coordinates with
// multistart; throws no-critical-point when every start escapes the box.
MinimizeResult minimize_model(const ReducedModel& model, ansatz::Mode mode,
                              const std::vector<AnchorData>& anchors, double box_lo = 0.02,
                              double box_hi = 50.0, int starts = 12, unsigned seed = 1234);

// Closed-form single-peak stationary point (oracle for the optimizer).
struct SinglePeakStationary {
    double t_star = 0;
    double d_star = 0;
};
SinglePeakStationary single_peak_closed_form(const ReducedModel& model, const AnchorData& anchor);

struct LemmaCheckRow {
    double eps = 0;
    double delta = 0;
    bool resolution_limited = false;
    double int_aUp = 0;         // int_{B(xi_1,eta)} a U_1^p
    double lhs100_dev_over_eps = 0;  // |int - gamma1 a - gamma1 g t eps| / eps
    double int_aUp1_PUmU = 0;   // int a U_1^{p-1}(PU_1 - U_1)
    double ratio10 = 0;         // against -gamma2 a eps (d/2t)^{n-2}
    double int_aUp1_PU2 = 0;    // int a U_1^{p-1} PU_2 (two-peak configs)
    double ratio11 = 0;         // against the (eq:11) prediction (tower) or /eps (separated)
};

// Grid-quadrature checks of Lemmas lew1/lez1 over B(xi_1, eta), eta as in (eta).
std::vector<LemmaCheckRow> lemma_checks(const std::shared_ptr<const fd::Discretization>& disc,
                                        const ReducedModel& model,
                                        const ansatz::ConcentrationConfig& config,
                                        const std::vector<double>& eps_ladder);

}  // namespace concentra::reduced
