#pragma once

// Initial-condition and test-corpus field builders.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "curveflow/grid.hpp"

namespace curveflow {

// A smooth periodic scalar: Σ_t amp_t · sin(2π Σ_i k_{t,i} x_i / L_i + phase_t).
struct FourierScalar {
  struct Term {
    std::array<int, kMaxDim> k{};
    double amplitude = 0.0;
    double phase = 0.0;
  };
  std::vector<Term> terms;

  double operator()(const ChartGrid& g, const std::array<double, kMaxDim>& x) const {
    double v = 0.0;
    for (const Term& t : terms) {
      double arg = t.phase;
      for (int i = 0; i < g.dim; ++i) arg += 2.0 * std::numbers::pi * t.k[i] * x[i] / g.lengths[i];
      v += t.amplitude * std::sin(arg);
    }
    return v;
  }

  // Partial derivative along `axis`, analytic.
  double derivative(const ChartGrid& g, const std::array<double, kMaxDim>& x, int axis) const {
    double v = 0.0;
    for (const Term& t : terms) {
      double arg = t.phase;
      for (int i = 0; i < g.dim; ++i) arg += 2.0 * std::numbers::pi * t.k[i] * x[i] / g.lengths[i];
      v += t.amplitude * std::cos(arg) * 2.0 * std::numbers::pi * t.k[axis] / g.lengths[axis];
    }
    return v;
  }

  // Flat Laplacian Σ_i ∂_i², analytic.
  double flat_laplacian(const ChartGrid& g, const std::array<double, kMaxDim>& x) const {
    double v = 0.0;
    for (const Term& t : terms) {
      double arg = t.phase;
      double k2 = 0.0;
      for (int i = 0; i < g.dim; ++i) {
        const double w = 2.0 * std::numbers::pi * t.k[i] / g.lengths[i];
        arg += w * x[i];
        k2 += w * w;
      }
      v -= t.amplitude * k2 * std::sin(arg);
    }
    return v;
  }

  TensorField sample(const ChartGrid& g) const {
    return make_field(g, {0, 0}, [&](const auto& x, std::span<double> out) { out[0] = (*this)(g, x); });
  }

  // Random low-mode combination; wavenumbers in [-max_mode, max_mode], not all zero.
  static FourierScalar random(int dim, int terms, int max_mode, double amplitude, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> mode(-max_mode, max_mode);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    FourierScalar f;
    for (int t = 0; t < terms; ++t) {
      Term term;
      bool nonzero = false;
      while (!nonzero) {
        for (int i = 0; i < dim; ++i) {
          term.k[i] = mode(rng);
          nonzero = nonzero || term.k[i] != 0;
        }
      }
      term.amplitude = amplitude * unit(rng);
      term.phase = phase(rng);
      f.terms.push_back(term);
    }
    return f;
  }

  // Deterministic recipe: amplitude · Σ_{m ∈ modes} Σ_axis sin(m·2πx_axis/L + axis·m) / (axis+1).
  static FourierScalar modes(int dim, const std::vector<int>& modes, double amplitude) {
    FourierScalar f;
    for (int m : modes)
      for (int axis = 0; axis < dim; ++axis) {
        Term t;
        t.k[axis] = m;
        t.amplitude = amplitude / (axis + 1);
        t.phase = 0.7 * axis * m;
        f.terms.push_back(t);
      }
    // A mixed term so that no axis direction is special.
    if (dim >= 2 && !modes.empty()) {
      Term t;
      for (int axis = 0; axis < dim; ++axis) t.k[axis] = 1;
      t.amplitude = 0.5 * amplitude;
      t.phase = 0.3;
      f.terms.push_back(t);
    }
    return f;
  }
};

// g = e^{2φ} δ.
inline MetricField conformal_metric(const ChartGrid& grid, const FourierScalar& phi) {
  const int d = grid.dim;
  TensorField g(grid, {0, 2});
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const double e = std::exp(2.0 * phi(grid, grid.position(n)));
    for (int i = 0; i < d; ++i) g.at(n, i * d + i) = e;
  }
  return MetricField(std::move(g));
}

// Smooth random symmetric rank-(0,2) field, each component an independent
// low-mode Fourier sum.
inline TensorField smooth_symmetric(const ChartGrid& grid, std::mt19937_64& rng, double amplitude, int max_mode = 2,
                                    int terms = 3) {
  const int d = grid.dim;
  TensorField h(grid, {0, 2});
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const FourierScalar f = FourierScalar::random(d, terms, max_mode, amplitude, rng);
      for (std::size_t n = 0; n < grid.nodes(); ++n) {
        const double v = f(grid, grid.position(n));
        h.at(n, i * d + j) = v;
        h.at(n, j * d + i) = v;
      }
    }
  h.declare({0, 1, false});
  return h;
}

// Smooth random field of arbitrary rank (no symmetry).
inline TensorField smooth_tensor(const ChartGrid& grid, Rank rank, std::mt19937_64& rng, double amplitude,
                                 int max_mode = 2, int terms = 2) {
  TensorField t(grid, rank);
  for (std::size_t c = 0; c < t.comps(); ++c) {
    const FourierScalar f = FourierScalar::random(grid.dim, terms, max_mode, amplitude, rng);
    for (std::size_t n = 0; n < grid.nodes(); ++n) t.at(n, c) = f(grid, grid.position(n));
  }
  return t;
}

// δ + h for a small symmetric perturbation h.
inline MetricField perturbed_flat(const ChartGrid& grid, std::mt19937_64& rng, double amplitude, int max_mode = 1) {
  TensorField g = smooth_symmetric(grid, rng, amplitude, max_mode);
  const int d = grid.dim;
  for (std::size_t n = 0; n < grid.nodes(); ++n)
    for (int i = 0; i < d; ++i) g.at(n, i * d + i) += 1.0;
  return MetricField(std::move(g));
}

}  // namespace curveflow
