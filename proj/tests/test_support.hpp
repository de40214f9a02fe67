#pragma once

// Shared fixtures and independent oracles for the unit suites.

#include <cmath>
#include <numbers>
#include <random>

#include "curveflow/fields.hpp"
#include "curveflow/grid.hpp"

namespace curveflow::testing {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Low-mode conformal factor used across the curvature tests.
inline FourierScalar standard_phi(int dim, double amplitude = 0.1) {
  FourierScalar phi;
  FourierScalar::Term a;
  a.k[0] = 1;
  a.amplitude = amplitude;
  a.phase = 0.2;
  phi.terms.push_back(a);
  FourierScalar::Term b;
  b.k[1] = 1;
  b.amplitude = 0.7 * amplitude;
  b.phase = 1.1;
  phi.terms.push_back(b);
  if (dim >= 3) {
    FourierScalar::Term c;
    c.k[0] = 1;
    c.k[2] = 1;
    c.amplitude = 0.5 * amplitude;
    c.phase = 0.4;
    phi.terms.push_back(c);
  }
  if (dim >= 4) {
    FourierScalar::Term e;
    e.k[3] = 1;
    e.k[1] = -1;
    e.amplitude = 0.4 * amplitude;
    e.phase = 2.0;
    phi.terms.push_back(e);
  }
  return phi;
}

// Classical conformal Christoffel symbols of e^{2φ}δ:
//   Γ^k_ij = δ^k_i ∂_jφ + δ^k_j ∂_iφ − δ_ij ∂_kφ.
inline double conformal_gamma(const FourierScalar& phi, const ChartGrid& g, const std::array<double, kMaxDim>& x,
                              int k, int i, int j) {
  double v = 0.0;
  if (k == i) v += phi.derivative(g, x, j);
  if (k == j) v += phi.derivative(g, x, i);
  if (i == j) v -= phi.derivative(g, x, k);
  return v;
}

// Ratio of coarse to fine defect for a 2x refinement, expected 2^order.
inline bool converges_at(double coarse, double fine, int order, double band = 0.2) {
  const double ratio = coarse / fine;
  const double target = std::pow(2.0, order);
  return ratio > target * (1.0 - band) && ratio < target * (1.0 + band);
}

}  // namespace curveflow::testing
