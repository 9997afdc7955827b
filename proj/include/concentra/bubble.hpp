// Standard bubbles U_{delta,xi}, their parameter derivatives, and radial moment integrals.
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace concentra::bubble {

struct BubbleParams {
    double delta;             // concentration scale, > 0
    std::vector<double> xi;   // center in R^n
    int n;                    // dimension, >= 3

    BubbleParams(double delta_, std::vector<double> xi_, int n_);
};

// [n(n-2)]^{(n-2)/4}
double alpha_n(int n);

// Critical exponent p = 2n/(n-2).
double critical_p(int n);

// U_{delta,xi}(x) = alpha_n delta^{(n-2)/2} / (delta^2 + |x-xi|^2)^{(n-2)/2}
double value(const BubbleParams& b, std::span<const double> x);

// j = 0: d/d delta; j in 1..n: d/d xi_j. Closed forms.
double derivative(const BubbleParams& b, std::span<const double> x, int j);

// Spatial gradient of U at x (closed form), written into g (size n).
void gradient(const BubbleParams& b, std::span<const double> x, std::span<double> g);

// Radial profile value at distance r from the center.
double radial(const BubbleParams& b, double r);
double radial_derivative_r(const BubbleParams& b, double r);  // dU/dr

// Moments over the ball B(0, eta), optionally with a radial cutoff chi(r):
//   moment_power(q, k): int_{B(eta)} U^q |x|^k dx
//   moment_grad2(k):    int_{B(eta)} |grad U|^2 |x|^k dx
//   moment_xdotgrad:    int_{B(eta)} <x, grad U> dx
// All reduce to 1-D adaptive quadratures of the closed forms.
struct RadialCutoff {
    double r0;  // chi = 1 for r <= r0
    double r1;  // chi = 0 for r >= r1
    bool active = false;
};

double moment_power(const BubbleParams& b, double q, int k, double eta,
                    const RadialCutoff& chi = {});
double moment_grad2(const BubbleParams& b, int k, double eta, const RadialCutoff& chi = {});
double moment_xdotgrad(const BubbleParams& b, double eta, const RadialCutoff& chi = {});

// Generic chi-weighted radial moment  int chi F(r) dV = |S^{n-1}| int chi F r^{n-1} dr.
double moment_radial(const BubbleParams& b, const std::function<double(double)>& F, double eta,
                     const RadialCutoff& chi = {});

// Radial profiles of the parameter derivatives: psi^0 is radial, psi^j = Q(r)(x_j - xi_j).
double psi0_radial(const BubbleParams& b, double r);
double psij_profile(const BubbleParams& b, double r);

}  // namespace concentra::bubble
