// Dirichlet Green function machinery: exact regular parts on ball and half-space,
// numeric regular part on general domains, and the collar-bound diagnostics.
#pragma once

#include <optional>
#include <string>

#include "concentra/grid.hpp"

namespace concentra::green {

// Regular part of the unnormalized kernel |x-y|^{-(n-2)} on the unit ball, via the
// Kelvin reflection y* = y/|y|^2:  H(x,y) = (|y| |x - y*|)^{-(n-2)}.
double regular_part_ball(std::span<const double> x, std::span<const double> y, int n);
// Gradient in x (same convention); writes n components.
void regular_part_ball_gradient(std::span<const double> x, std::span<const double> y, int n,
                                std::span<double> grad);

// Half-space {x_n > 0}: H(x,y) = |xbar - y|^{-(n-2)} with xbar the mirror image.
double regular_part_halfspace(std::span<const double> x, std::span<const double> y, int n);
void regular_part_halfspace_gradient(std::span<const double> x, std::span<const double> y, int n,
                                     std::span<double> grad);

// Unnormalized singular kernel and the normalized Green function.
double kernel_gamma(std::span<const double> x, std::span<const double> y, int n);
double unit_ball_volume(int n);
double green_normalized(std::span<const double> x, std::span<const double> y, int n, double H);

// Numeric regular part: solves the discrete Laplace problem with boundary data
// Gamma(., y) on a unit-weight discretization. y must sit > 2h inside the boundary.
fd::GridField regular_part_numeric(const std::shared_ptr<const fd::Discretization>& unit_disc,
                                   const Vec3& y);

struct CollarBoundsReport {
    double sup_ratio2 = 0;    // (eq:2)
    double sup_ratio31 = 0;   // (eq:31)
    double sup_ratio15 = 0;   // (eq:15)
    double min_H = 0;         // H >= 0 check
    // OLS slope of binned max ratio versus d_x (>= 0 means no blow-up toward the
    // boundary) together with its standard error for a noise-aware test.
    double slope2 = 0, slope31 = 0, slope15 = 0;
    double stderr2 = 0, stderr31 = 0, stderr15 = 0;
    int samples = 0;

    // No meaningful growth of the binned maxima toward d_x -> 0: a negative trend must
    // exceed both the fit noise and 2% of the ratio level across the sampled band
    // (d_x in [0.01, 0.2]) before it counts as blow-up.
    bool no_blowup(double slope, double se, double sup) const {
        return slope >= -(3.0 * se + 0.02 * sup / 0.19);
    }
    bool all_bounded() const {
        return no_blowup(slope2, stderr2, sup_ratio2) && no_blowup(slope31, stderr31, sup_ratio31) &&
               no_blowup(slope15, stderr15, sup_ratio15);
    }
};

// Samples (x, y) with x in the collar on the unit ball (exact formulas) and reports the
// empirical constants of Lemma-style bounds. Optionally writes a CSV
// (columns d_x, dist_xbar_y, ratio2, ratio31, ratio15).
CollarBoundsReport check_collar_bounds(const geom::DomainModel& dom, int samples, unsigned seed,
                                       const std::string& csv_path = "");

}  // namespace concentra::green
