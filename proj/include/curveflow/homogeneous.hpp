#pragma once

// Left-invariant diagonal metrics on 3D unimodular Lie groups.
//
// Frame e_1, e_2, e_3 with [e_2,e_3] = c_1 e_1, [e_3,e_1] = c_2 e_2,
// [e_1,e_2] = c_3 e_3 and metric ⟨e_i,e_j⟩ = coeffs_i δ_ij. Flows preserve
// the diagonal form, so Ricci flow and cross-curvature flow reduce to ODEs
// for (a, b, c).
//
// Two independent evaluations live here: the closed-form Milnor expressions
// (frame_curvature, frame_flow_rhs) and a general frame calculus built from
// the Koszul formula (namespace frame), which evaluates any tensor formula
// on left-invariant tensors. Tests cross-check the two.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "curveflow/flows.hpp"

namespace curveflow {

struct FrameMetric {
  std::array<double, 3> structure{2.0, 2.0, 2.0};
  std::array<double, 3> coeffs{1.0, 1.0, 1.0};
  double volume_norm = 2.0 * std::numbers::pi * std::numbers::pi;

  // SU(2); a = b = c = 1 is the unit round 3-sphere.
  static FrameMetric su2(double a, double b, double c) { return {{2.0, 2.0, 2.0}, {a, b, c}, 2.0 * std::numbers::pi * std::numbers::pi}; }
  // Ricci-flow-only stubs. The volume normalisation is nominal.
  static FrameMetric nil(double a, double b, double c) { return {{1.0, 0.0, 0.0}, {a, b, c}, 1.0}; }
  static FrameMetric sol(double a, double b, double c) { return {{1.0, -1.0, 0.0}, {a, b, c}, 1.0}; }

  void validate() const {
    for (double v : coeffs)
      if (!(v > 0.0) || !std::isfinite(v)) throw SingularMetric(0, v);
    for (double v : structure)
      if (!std::isfinite(v)) throw DomainError("frame structure constants must be finite");
    if (!(volume_norm > 0.0)) throw DomainError("frame volume normalisation must be positive");
  }

  double volume() const { return volume_norm * std::sqrt(coeffs[0] * coeffs[1] * coeffs[2]); }
};

// Curvature in frame components: rc[i] = Rc(e_i, e_i), e[i] = E(e_i, e_i).
// sectional[i] is the sectional curvature of the plane orthogonal to e_i.
struct FrameCurvature {
  std::array<double, 3> sectional{};
  std::array<double, 3> rc{};
  double s = 0.0;
  std::array<double, 3> e{};
  std::array<double, 3> rc_orth{};  // orthonormal-frame values
  std::array<double, 3> e_orth{};
};

inline FrameCurvature frame_curvature(const FrameMetric& f) {
  f.validate();
  const auto& q = f.coeffs;
  std::array<double, 3> lam{}, mu{};
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    lam[i] = f.structure[i] * std::sqrt(q[i] / (q[j] * q[k]));
  }
  const double half = 0.5 * (lam[0] + lam[1] + lam[2]);
  for (int i = 0; i < 3; ++i) mu[i] = half - lam[i];
  FrameCurvature fc;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    fc.rc_orth[i] = 2.0 * mu[j] * mu[k];
  }
  fc.s = fc.rc_orth[0] + fc.rc_orth[1] + fc.rc_orth[2];
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    fc.sectional[i] = 0.5 * (fc.rc_orth[j] + fc.rc_orth[k] - fc.rc_orth[i]);
    fc.e_orth[i] = fc.rc_orth[i] - 0.5 * fc.s;
    fc.rc[i] = q[i] * fc.rc_orth[i];
    fc.e[i] = q[i] * fc.e_orth[i];
  }
  return fc;
}

// Orthonormal cross-curvature values: P = Π E_i, X_i = P / E_i.
struct FrameXcf {
  std::array<double, 3> e_orth{};
  double p = 0.0;
  std::array<double, 3> x_orth{};
  double margin = 0.0;  // min_i (−σ E_i)
};

inline FrameXcf frame_xcf(const FrameMetric& f, int sigma) {
  const FrameCurvature fc = frame_curvature(f);
  FrameXcf x;
  x.e_orth = fc.e_orth;
  x.p = fc.e_orth[0] * fc.e_orth[1] * fc.e_orth[2];
  double emax = 0.0;
  for (double v : fc.e_orth) emax = std::max(emax, std::abs(v));
  for (int i = 0; i < 3; ++i)
    if (!(std::abs(fc.e_orth[i]) > 1e-12 * std::max(1.0, emax))) throw NonInvertibleEinstein(static_cast<std::size_t>(i));
  x.margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    x.x_orth[i] = fc.e_orth[j] * fc.e_orth[k];
    x.margin = std::min(x.margin, -sigma * fc.e_orth[i]);
  }
  return x;
}

namespace frame {

// Dense covariant tensors on the 3D frame; component layout matches the
// grid convention (row-major, derivative slots appended last).
struct Tensor {
  int order = 0;
  std::vector<double> c;
  Tensor() = default;
  explicit Tensor(int order) : order(order), c(ipow(3, order), 0.0) {}
  double max_abs() const {
    double m = 0.0;
    for (double v : c) m = std::max(m, std::abs(v));
    return m;
  }
  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.c[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= o.c[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : c) v *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }
};

// Geometry of one left-invariant metric: structure constants C^k_ij,
// metric, inverse, and connection ∇_{e_i} e_j = Γ^k_ij e_k.
struct Geometry {
  std::array<double, 27> C{};      // [k][i][j]
  std::array<double, 9> g{}, gi{};  // [i][j]
  std::array<double, 27> gamma{};  // [k][i][j]
  Tensor rm;                       // R_{ijkl}
  Tensor rc;
  double s = 0.0;
  Tensor e;

  double G(int k, int i, int j) const { return gamma[(k * 3 + i) * 3 + j]; }
};

inline Geometry geometry(const std::array<double, 3>& structure, const std::array<double, 9>& g) {
  Geometry geo;
  geo.g = g;
  SmallMatrix m(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = g[i * 3 + j];
  const SmallMatrix mi = m.inverse();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) geo.gi[i * 3 + j] = 0.5 * (mi(i, j) + mi(j, i));
  auto& C = geo.C;
  // [e_2,e_3] = c_1 e_1 and cyclic
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    C[(i * 3 + j) * 3 + k] = structure[i];
    C[(i * 3 + k) * 3 + j] = -structure[i];
  }
  // ⟨[e_a,e_b], e_c⟩
  auto br = [&](int a, int b, int c) {
    double acc = 0.0;
    for (int m2 = 0; m2 < 3; ++m2) acc += C[(m2 * 3 + a) * 3 + b] * g[m2 * 3 + c];
    return acc;
  };
  // Koszul: ⟨∇_i e_j, e_k⟩ = ½(⟨[e_i,e_j],e_k⟩ − ⟨[e_j,e_k],e_i⟩ + ⟨[e_k,e_i],e_j⟩)
  std::array<double, 27> lo{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) lo[(k * 3 + i) * 3 + j] = 0.5 * (br(i, j, k) - br(j, k, i) + br(k, i, j));
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += geo.gi[l * 3 + k] * lo[(k * 3 + i) * 3 + j];
        geo.gamma[(l * 3 + i) * 3 + j] = acc;
      }
  // R(e_i,e_j)e_k = ∇_i∇_j e_k − ∇_j∇_i e_k − ∇_{[e_i,e_j]} e_k
  //   R^l_{ijk} = Γ^m_jk Γ^l_im − Γ^m_ik Γ^l_jm − C^m_ij Γ^l_mk
  geo.rm = Tensor(4);
  std::array<double, 81> rup{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double up = 0.0;
          for (int m2 = 0; m2 < 3; ++m2)
            up += geo.G(m2, j, k) * geo.G(l, i, m2) - geo.G(m2, i, k) * geo.G(l, j, m2) -
                  C[(m2 * 3 + i) * 3 + j] * geo.G(l, m2, k);
          rup[((i * 3 + j) * 3 + k) * 3 + l] = up;
        }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double acc = 0.0;
          for (int m2 = 0; m2 < 3; ++m2) acc += rup[((i * 3 + j) * 3 + k) * 3 + m2] * g[m2 * 3 + l];
          geo.rm.c[((i * 3 + j) * 3 + k) * 3 + l] = acc;
        }
  geo.rc = Tensor(2);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int l = 0; l < 3; ++l) geo.rc.c[j * 3 + k] += geo.gi[i * 3 + l] * geo.rm.c[((i * 3 + j) * 3 + k) * 3 + l];
  geo.s = 0.0;
  for (int t = 0; t < 9; ++t) geo.s += geo.gi[t] * geo.rc.c[t];
  geo.e = geo.rc;
  for (int t = 0; t < 9; ++t) geo.e.c[t] -= 0.5 * geo.s * g[t];
  return geo;
}

inline std::array<double, 9> diagonal(const std::array<double, 3>& d) {
  return {d[0], 0.0, 0.0, 0.0, d[1], 0.0, 0.0, 0.0, d[2]};
}

inline Geometry geometry(const FrameMetric& f) {
  f.validate();
  return geometry(f.structure, diagonal(f.coeffs));
}

// ∇ of a left-invariant covariant tensor: only connection terms survive,
//   (∇T)[a_1..a_r, m] = −Σ_s Γ^p_{m a_s} T[..p..].
inline Tensor covariant_derivative(const Tensor& t, const Geometry& geo) {
  const int r = t.order;
  Tensor out(r + 1);
  const IndexSpace space{3, r};
  for (std::size_t c = 0; c < t.c.size(); ++c)
    for (int m = 0; m < 3; ++m) {
      double acc = 0.0;
      for (int s = 0; s < r; ++s) {
        const int is = space.index(c, s);
        const std::size_t st = space.stride(s);
        const std::size_t base = c - is * st;
        for (int p = 0; p < 3; ++p) acc -= geo.G(p, m, is) * t.c[base + p * st];
      }
      out.c[c * 3 + m] = acc;
    }
  return out;
}

inline Tensor covariant_derivative(const Tensor& t, const Geometry& geo, int times) {
  Tensor out = t;
  for (int i = 0; i < times; ++i) out = covariant_derivative(out, geo);
  return out;
}

// g^{ab} contraction of the last two slots.
inline Tensor trace_last_two(const Tensor& t, const Geometry& geo) {
  Tensor out(t.order - 2);
  for (std::size_t c = 0; c < out.c.size(); ++c)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out.c[c] += geo.gi[a * 3 + b] * t.c[(c * 3 + a) * 3 + b];
  return out;
}

inline Tensor laplacian(const Tensor& t, const Geometry& geo) {
  return trace_last_two(covariant_derivative(t, geo, 2), geo);
}

inline Tensor laplacian_iter(const Tensor& t, const Geometry& geo, int k) {
  Tensor out = t;
  for (int i = 0; i < k; ++i) out = laplacian(out, geo);
  return out;
}

inline Tensor symmetrized2(Tensor t) {
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double m = 0.5 * (t.c[i * 3 + j] + t.c[j * 3 + i]);
      t.c[i * 3 + j] = t.c[j * 3 + i] = m;
    }
  return t;
}

inline Tensor metric_tensor(const Geometry& geo) {
  Tensor g(2);
  for (int t = 0; t < 9; ++t) g.c[t] = geo.g[t];
  return g;
}

// Frame evaluation of the same quadratic expression as the grid l2_quadratics.
inline Tensor l2_quadratics(const Geometry& geo) {
  const auto& gi = geo.gi;
  const auto& rm = geo.rm.c;
  auto R = [&](int i, int j, int k, int l) { return rm[((i * 3 + j) * 3 + k) * 3 + l]; };
  double rc_up[9] = {}, rc_mix[9] = {};
  for (int p = 0; p < 3; ++p)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a) rc_mix[p * 3 + j] += gi[p * 3 + a] * geo.rc.c[a * 3 + j];
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q)
      for (int b = 0; b < 3; ++b) rc_up[p * 3 + q] += rc_mix[p * 3 + b] * gi[b * 3 + q];
  // R_i^{pqr} by full contraction
  std::array<double, 81> up{};
  for (int i = 0; i < 3; ++i)
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        for (int r = 0; r < 3; ++r) {
          double acc = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              for (int c = 0; c < 3; ++c) acc += gi[p * 3 + a] * gi[q * 3 + b] * gi[r * 3 + c] * R(i, a, b, c);
          up[((i * 3 + p) * 3 + q) * 3 + r] = acc;
        }
  double norm2 = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a)
      for (int t = 0; t < 27; ++t) norm2 += gi[i * 3 + a] * up[a * 27 + t] * rm[i * 27 + t];
  Tensor out(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double t1 = 0.0, t2 = 0.0, t3 = 0.0;
      for (int p = 0; p < 3; ++p) {
        t2 += rc_mix[p * 3 + i] * geo.rc.c[p * 3 + j];
        for (int q = 0; q < 3; ++q) t1 += rc_up[p * 3 + q] * R(i, p, q, j);
      }
      for (int t = 0; t < 27; ++t) t3 += up[i * 27 + t] * rm[j * 27 + t];
      out.c[i * 3 + j] = 2.0 * t1 - 2.0 * t2 + t3 - 0.25 * norm2 * geo.g[i * 3 + j];
    }
  return symmetrized2(out);
}

// Θ_{2k} + Λ on left-invariant data. S is constant, so ∇∇S drops out.
inline Tensor family_rhs(const Geometry& geo, const FlowSpec& spec) {
  spec.validate(3);
  Tensor out = laplacian_iter(geo.rc, geo, spec.k);
  if (spec.alpha != 0.0) {
    // Δ^k of the constant scalar S vanishes for k >= 1.
    if (spec.k == 0) out += (spec.alpha * geo.s) * metric_tensor(geo);
  }
  out *= (spec.k % 2 == 0) ? -2.0 : 2.0;
  out = symmetrized2(out);
  if (spec.preset == LambdaPreset::l2_quadratics) out += l2_quadratics(geo);
  return out;
}

inline Tensor tensor_rhs(const Geometry& geo, const FlowSpec& spec) {
  switch (spec.kind) {
    case FlowKind::ricci: return -2.0 * symmetrized2(geo.rc);
    case FlowKind::l2: return family_rhs(geo, FlowSpec::family(1, 0.0, -0.5, LambdaPreset::l2_quadratics));
    case FlowKind::family: return family_rhs(geo, spec);
    case FlowKind::xcf: break;
  }
  throw DomainError("tensor_rhs does not handle xcf; use frame_flow_rhs");
}

// Cross-curvature algebra of the frame geometry via the grid pointwise kernel.
inline XcfPoint xcf(const Geometry& geo) {
  SmallMatrix g(3, 3), gi(3, 3), e(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      g(i, j) = geo.g[i * 3 + j];
      gi(i, j) = geo.gi[i * 3 + j];
      e(i, j) = geo.e.c[i * 3 + j];
    }
  return xcf_point(g, gi, e, geo.rm.c.data());
}

inline Tensor from_matrix(const SmallMatrix& m) {
  Tensor t(2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.c[i * 3 + j] = m(i, j);
  return t;
}

}  // namespace frame

// Diagonal ODE right-hand side d(a,b,c)/dt.
//   ricci: −2 Rc(e_i,e_i) (closed form)
//   xcf:   −2σ X(e_i,e_i) with X from the closed-form frame algebra
//   l2, family: frame calculus; the diagonal ansatz is checked.
inline std::array<double, 3> frame_flow_rhs(const FrameMetric& f, const FlowSpec& spec, double lambda_min = 0.0) {
  f.validate();
  std::array<double, 3> out{};
  switch (spec.kind) {
    case FlowKind::ricci: {
      const FrameCurvature fc = frame_curvature(f);
      for (int i = 0; i < 3; ++i) out[i] = -2.0 * fc.rc[i];
      return out;
    }
    case FlowKind::xcf: {
      spec.validate(3);
      const FrameXcf x = frame_xcf(f, spec.sigma);
      if (!(x.margin > lambda_min)) {
        int worst = 0;
        for (int i = 1; i < 3; ++i)
          if (-spec.sigma * x.e_orth[i] < -spec.sigma * x.e_orth[worst]) worst = i;
        throw DefinitenessViolated(static_cast<std::size_t>(worst), spec.sigma * x.e_orth[worst],
                                   "frame Einstein tensor");
      }
      for (int i = 0; i < 3; ++i) out[i] = -2.0 * spec.sigma * f.coeffs[i] * x.x_orth[i];
      return out;
    }
    default: {
      const frame::Geometry geo = frame::geometry(f);
      const frame::Tensor t = frame::tensor_rhs(geo, spec);
      double off = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (i != j) off = std::max(off, std::abs(t.c[i * 3 + j]));
      if (off > 1e-10 * std::max(1.0, t.max_abs())) throw NumericalError("frame flow leaves the diagonal ansatz");
      for (int i = 0; i < 3; ++i) out[i] = t.c[i * 4];
      return out;
    }
  }
}

}  // namespace curveflow
