// Adaptive 1-D quadrature (Gauss-Kronrod 15/7) and radial helpers.
#pragma once

#include <functional>
#include <vector>

namespace concentra::quad {

struct Options {
    double rel_tol = 1e-11;
    double abs_tol = 1e-14;
    int max_depth = 48;
};

// Adaptive bisection on [a, b]. Throws quadrature-failure on non-convergence.
double integrate(const std::function<double(double)>& f, double a, double b,
                 const Options& opt = {});

// Integral over [a, infinity) via t -> a + t/(1-t).
double integrate_semi_infinite(const std::function<double(double)>& f, double a,
                               const Options& opt = {});

// Surface area of the unit sphere S^{n-1} in R^n: 2 pi^{n/2} / Gamma(n/2).
double unit_sphere_area(int n);

// Surface area of S^d as a subset of R^{d+1}.
double sphere_area(int d);

// Quintic smoothstep cutoff: 1 on [0, r0], 0 on [r1, inf).
double smooth_cutoff(double r, double r0, double r1);

// Gauss-Legendre nodes/weights on [-1, 1].
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};
GaussRule gauss_legendre(int m);

}  // namespace concentra::quad
