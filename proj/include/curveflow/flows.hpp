#pragma once

// Right-hand sides of the curvature flows and the cross-curvature algebra.

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>

#include "curveflow/tensor_calc.hpp"

namespace curveflow {

enum class FlowKind { ricci, l2, family, xcf };
enum class LambdaPreset { zero, l2_quadratics };

inline const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::ricci: return "ricci";
    case FlowKind::l2: return "l2";
    case FlowKind::family: return "family";
    case FlowKind::xcf: return "xcf";
  }
  return "?";
}

inline const char* to_string(LambdaPreset p) { return p == LambdaPreset::zero ? "zero" : "l2_quadratics"; }

struct FlowSpec {
  FlowKind kind = FlowKind::ricci;
  int k = 0;
  double alpha = 0.0;
  double beta = 0.0;
  int sigma = 1;
  LambdaPreset preset = LambdaPreset::zero;

  static FlowSpec ricci() { return {}; }
  static FlowSpec l2() { return {FlowKind::l2, 1, 0.0, -0.5, 1, LambdaPreset::l2_quadratics}; }
  static FlowSpec family(int k, double alpha, double beta, LambdaPreset preset = LambdaPreset::zero) {
    return {FlowKind::family, k, alpha, beta, 1, preset};
  }
  static FlowSpec xcf(int sigma) { return {FlowKind::xcf, 0, 0.0, 0.0, sigma, LambdaPreset::zero}; }

  // Order of the leading differential operator acting on g.
  int operator_order() const {
    switch (kind) {
      case FlowKind::l2: return 4;
      case FlowKind::family: return 2 * k + 2;
      default: return 2;
    }
  }

  // The energy-method k: 1 for l2, 0 for ricci and xcf.
  int energy_k() const { return kind == FlowKind::l2 ? 1 : (kind == FlowKind::family ? k : 0); }
  double energy_alpha() const { return kind == FlowKind::family ? alpha : 0.0; }

  void validate(int dim) const {
    if (kind == FlowKind::family) {
      if (k < 0) throw DomainError("family flow needs k >= 0");
      if (k == 0 && beta != 0.0) throw DomainError("family flow with k = 0 requires beta = 0");
      if (preset == LambdaPreset::l2_quadratics && k != 1)
        throw DomainError("the l2_quadratics preset is only defined for k = 1");
      if (!std::isfinite(alpha) || !std::isfinite(beta)) throw DomainError("alpha and beta must be finite");
    }
    if (kind == FlowKind::xcf) {
      if (dim != 3) throw DomainError("cross-curvature flow requires dim = 3");
      if (sigma != 1 && sigma != -1) throw DomainError("sigma must be +1 or -1");
    }
  }

  // Set when the uniqueness hypothesis α > −1/(2(n−1)) fails.
  std::optional<std::string> admissibility_warning(int dim) const {
    const double bound = -1.0 / (2.0 * (dim - 1));
    if (kind == FlowKind::family && !(alpha > bound))
      return "alpha = " + std::to_string(alpha) + " is outside the uniqueness range alpha > " + std::to_string(bound);
    return std::nullopt;
  }

  friend bool operator==(const FlowSpec&, const FlowSpec&) = default;
};

// ---------------------------------------------------------------------------

inline TensorField ricci_rhs(const MetricField&, const CurvatureBundle& cb) {
  TensorField out = cb.rc;
  out *= -2.0;
  return symmetrized(std::move(out));
}

inline TensorField ricci_rhs(const MetricField& g) { return ricci_rhs(g, curvature(g)); }

// 2R^{pq}R_{ipqj} − R^p_i R_pj + R_i^{pqr} R_{jpqr} − ¼|Rm|² g_ij
inline TensorField l2_quadratics(const MetricField& g, const CurvatureBundle& cb) {
  TensorField out(g.grid(), {0, 2});
  with_dim(g.dim(), [&](auto dc) {
    constexpr int d = decltype(dc)::value;
    parallel_nodes(g.grid().nodes(), [&](std::size_t n) {
      const auto gi = g.inverse().node(n);
      const auto gn = g.g().node(n);
      const auto rm = cb.rm.node(n);
      const auto rc = cb.rc.node(n);
      auto R = [&](int i, int j, int k, int l) { return rm[((i * d + j) * d + k) * d + l]; };
      double rc_up[d * d] = {}, rc_mix[d * d] = {};  // R^{pq}, R^p_j
      for (int p = 0; p < d; ++p)
        for (int j = 0; j < d; ++j)
          for (int a = 0; a < d; ++a) rc_mix[p * d + j] += gi[p * d + a] * rc[a * d + j];
      for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q)
          for (int b = 0; b < d; ++b) rc_up[p * d + q] += rc_mix[p * d + b] * gi[b * d + q];
      // R_i^{pqr}: raise slots 1..3 one at a time.
      double a1[d * d * d * d], a2[d * d * d * d], up[d * d * d * d];
      for (int i = 0; i < d; ++i)
        for (int p = 0; p < d; ++p)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) {
              double acc = 0.0;
              for (int a = 0; a < d; ++a) acc += gi[p * d + a] * R(i, a, k, l);
              a1[((i * d + p) * d + k) * d + l] = acc;
            }
      for (int i = 0; i < d; ++i)
        for (int p = 0; p < d; ++p)
          for (int q = 0; q < d; ++q)
            for (int l = 0; l < d; ++l) {
              double acc = 0.0;
              for (int a = 0; a < d; ++a) acc += gi[q * d + a] * a1[((i * d + p) * d + a) * d + l];
              a2[((i * d + p) * d + q) * d + l] = acc;
            }
      for (int i = 0; i < d; ++i)
        for (int p = 0; p < d; ++p)
          for (int q = 0; q < d; ++q)
            for (int r = 0; r < d; ++r) {
              double acc = 0.0;
              for (int a = 0; a < d; ++a) acc += gi[r * d + a] * a2[((i * d + p) * d + q) * d + a];
              up[((i * d + p) * d + q) * d + r] = acc;
            }
      // |Rm|² = g^{ia} R_a^{pqr} R_{ipqr}
      double norm2 = 0.0;
      for (int i = 0; i < d; ++i)
        for (int a = 0; a < d; ++a)
          for (int t = 0; t < d * d * d; ++t) norm2 += gi[i * d + a] * up[a * d * d * d + t] * rm[i * d * d * d + t];
      auto on = out.node(n);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double t1 = 0.0, t2 = 0.0, t3 = 0.0;
          for (int p = 0; p < d; ++p) {
            t2 += rc_mix[p * d + i] * rc[p * d + j];
            for (int q = 0; q < d; ++q) t1 += rc_up[p * d + q] * R(i, p, q, j);
          }
          for (int t = 0; t < d * d * d; ++t) t3 += up[i * d * d * d + t] * rm[j * d * d * d + t];
          // −2 R^p_iR_pj, not −1: that is what makes this the exact gradient of ∫|Rm|²
          on[i * d + j] = 2.0 * t1 - 2.0 * t2 + t3 - 0.25 * norm2 * gn[i * d + j];
        }
    });
  });
  return symmetrized(std::move(out));
}

inline TensorField family_rhs(const MetricField& g, const CurvatureBundle& cb, const FlowSpec& spec) {
  if (spec.kind != FlowKind::family) throw DomainError("family_rhs needs a family flow spec");
  spec.validate(g.dim());
  TensorField out = obstruction_leading(g, cb, spec.k, spec.alpha, spec.beta);
  if (spec.preset == LambdaPreset::l2_quadratics) out += l2_quadratics(g, cb);
  return out;
}

inline TensorField family_rhs(const MetricField& g, const FlowSpec& spec) { return family_rhs(g, curvature(g), spec); }

inline TensorField l2_rhs(const MetricField& g, const CurvatureBundle& cb) {
  return family_rhs(g, cb, FlowSpec::family(1, 0.0, -0.5, LambdaPreset::l2_quadratics));
}

inline TensorField l2_rhs(const MetricField& g) { return l2_rhs(g, curvature(g)); }

// ∫ |Rm|² dμ, all indices contracted with g^{-1}.
inline double curvature_functional(const MetricField& g, const CurvatureBundle& cb) {
  return l2_norm_squared(cb.rm, g);
}

inline double curvature_functional(const MetricField& g) { return curvature_functional(g, curvature(g)); }

// ---------------------------------------------------------------------------
// Cross-curvature algebra

// Einstein-tensor algebra at a single point.
struct XcfPoint {
  SmallMatrix e;         // E_ij
  SmallMatrix e_raised;  // E^{ij}
  SmallMatrix v;         // V_ij, V_ik E^{kj} = δ_i^j
  double p = 0.0;        // det E_ij / det g_ij
  SmallMatrix x;         // P V
  SmallMatrix x_alt;     // −½ E^{pq} R_{pijq}
  double eig_min = 0.0;  // spectrum of E relative to g
  double eig_max = 0.0;
};

// `rm` holds R_{ijkl} in row-major order. Throws NonInvertibleEinstein
// (with `node`) when |det E^{..}| < 1e-12 |det g^{-1}|.
inline XcfPoint xcf_point(const SmallMatrix& g, const SmallMatrix& ginv, const SmallMatrix& e, const double* rm,
                          std::size_t node = 0) {
  const int d = static_cast<int>(g.rows());
  XcfPoint pt;
  pt.e = 0.5 * (e + e.transpose());
  pt.e_raised = ginv * pt.e * ginv;
  pt.e_raised = (0.5 * (pt.e_raised + pt.e_raised.transpose())).eval();
  const double det_er = pt.e_raised.determinant();
  if (!(std::abs(det_er) >= 1e-12 * std::abs(ginv.determinant()))) throw NonInvertibleEinstein(node);
  pt.v = pt.e_raised.inverse();
  pt.v = (0.5 * (pt.v + pt.v.transpose())).eval();
  pt.p = pt.e.determinant() / g.determinant();
  pt.x = pt.p * pt.v;
  pt.x_alt = SmallMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int p = 0; p < d; ++p)
        for (int q = 0; q < d; ++q) acc += pt.e_raised(p, q) * rm[((p * d + i) * d + j) * d + q];
      pt.x_alt(i, j) = -0.5 * acc;
    }
  Eigen::GeneralizedSelfAdjointEigenSolver<SmallMatrix> es(pt.e, g, Eigen::EigenvaluesOnly);
  pt.eig_min = es.eigenvalues()(0);
  pt.eig_max = es.eigenvalues()(d - 1);
  return pt;
}

// Einstein tensor of an algebraic curvature tensor at a point.
inline SmallMatrix einstein_point(const SmallMatrix& g, const SmallMatrix& ginv, const double* rm) {
  const int d = static_cast<int>(g.rows());
  SmallMatrix rc = SmallMatrix::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        for (int l = 0; l < d; ++l) rc(j, k) += ginv(i, l) * rm[((i * d + j) * d + k) * d + l];
  const double s = (ginv.cwiseProduct(rc)).sum();
  return rc - 0.5 * s * g;
}

struct XcfAlgebra {
  TensorField e, e_raised, v, p, x, x_alt;
  TensorField eig_min, eig_max;  // spectrum of E against g, per node

  // max-abs discrepancy between the two cross-curvature formulas
  double xcdef_defect() const { return (x - x_alt).max_abs(); }

  // Smallest eigenvalue of −σE against g over all nodes, with its node.
  std::pair<double, std::size_t> margin(int sigma) const {
    double lo = std::numeric_limits<double>::infinity();
    std::size_t where = 0;
    for (std::size_t n = 0; n < e.nodes(); ++n) {
      const double m = sigma > 0 ? -eig_max.at(n, 0) : eig_min.at(n, 0);
      if (m < lo) {
        lo = m;
        where = n;
      }
    }
    return {lo, where};
  }

  double lambda_margin(int sigma) const { return margin(sigma).first; }

  // Largest λ with λg ≤ −σE ≤ λ^{-1}g (≤ 0 if −σE is not definite).
  double ellipticity(int sigma) const {
    double hi = 0.0;
    for (std::size_t n = 0; n < e.nodes(); ++n) hi = std::max(hi, sigma > 0 ? -eig_min.at(n, 0) : eig_max.at(n, 0));
    const double lo = lambda_margin(sigma);
    return hi > 0.0 ? std::min(lo, 1.0 / hi) : lo;
  }
};

inline XcfAlgebra xcf_algebra(const MetricField& g, const CurvatureBundle& cb) {
  const ChartGrid& grid = g.grid();
  const int d = grid.dim;
  XcfAlgebra a{TensorField(grid, {0, 2}), TensorField(grid, {2, 0}), TensorField(grid, {0, 2}),
               TensorField(grid, {0, 0}), TensorField(grid, {0, 2}), TensorField(grid, {0, 2}),
               TensorField(grid, {0, 0}), TensorField(grid, {0, 0})};
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const XcfPoint pt = xcf_point(g.matrix_at(n), g.inverse_at(n), MetricField::block_matrix(cb.e, n),
                                  cb.rm.node(n).data(), n);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        a.e.at(n, i * d + j) = pt.e(i, j);
        a.e_raised.at(n, i * d + j) = pt.e_raised(i, j);
        a.v.at(n, i * d + j) = pt.v(i, j);
        a.x.at(n, i * d + j) = pt.x(i, j);
        a.x_alt.at(n, i * d + j) = pt.x_alt(i, j);
      }
    a.p.at(n, 0) = pt.p;
    a.eig_min.at(n, 0) = pt.eig_min;
    a.eig_max.at(n, 0) = pt.eig_max;
  }
  for (TensorField* t : {&a.e, &a.e_raised, &a.v, &a.x}) t->declare({0, 1, false});
  return a;
}

inline XcfAlgebra xcf_algebra(const MetricField& g) { return xcf_algebra(g, curvature(g)); }

// −2σX. Requires σE negative definite at every node with margin > lambda_min.
inline TensorField xcf_rhs(const XcfAlgebra& alg, int sigma, double lambda_min = 0.0) {
  if (sigma != 1 && sigma != -1) throw DomainError("sigma must be +1 or -1");
  const auto [m, node] = alg.margin(sigma);
  if (!(m > lambda_min)) throw DefinitenessViolated(node, -m, "ellipticity margin below threshold");
  TensorField out = alg.x;
  out *= -2.0 * sigma;
  return out;
}

inline TensorField xcf_rhs(const MetricField& g, int sigma, double lambda_min = 0.0) {
  if (g.dim() != 3) throw DomainError("cross-curvature flow requires dim = 3");
  return xcf_rhs(xcf_algebra(g), sigma, lambda_min);
}

// Dispatch on the spec.
inline TensorField flow_rhs(const MetricField& g, const CurvatureBundle& cb, const FlowSpec& spec,
                            double lambda_min = 0.0) {
  spec.validate(g.dim());
  switch (spec.kind) {
    case FlowKind::ricci: return ricci_rhs(g, cb);
    case FlowKind::l2: return l2_rhs(g, cb);
    case FlowKind::family: return family_rhs(g, cb, spec);
    case FlowKind::xcf: return xcf_rhs(xcf_algebra(g, cb), spec.sigma, lambda_min);
  }
  throw DomainError("unknown flow kind");
}

inline TensorField flow_rhs(const MetricField& g, const FlowSpec& spec) { return flow_rhs(g, curvature(g), spec); }

}  // namespace curveflow
