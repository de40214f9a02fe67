#pragma once

// Difference systems between two solutions, their energies, and the
// Grönwall audit.
//
// All norms are taken with the first metric of the pair (the reference).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "curveflow/flows.hpp"
#include "curveflow/homogeneous.hpp"

namespace curveflow {

// h = g − g̃, A = Γ − Γ̃, X_l = ∇^l Rm − ∇̃^l R̃m (l = 0..2k),
// Z_l = ∇^l S − ∇̃^l S̃ for l ∈ {0, 2k}.
struct DifferencePack {
  MetricField reference;
  Connection conn;  // of the reference
  TensorField h;
  TensorField a;
  std::vector<TensorField> x;
  TensorField z0;
  TensorField z_top;
  int k = 0;
};

inline DifferencePack build_differences(const MetricField& g, const MetricField& gt, int k) {
  require_same_grid(g.grid(), gt.grid());
  if (k < 0) throw DomainError("difference pack order k must be >= 0");
  const CurvatureBundle cb = curvature(g);
  const CurvatureBundle cbt = curvature(gt);
  DifferencePack p;
  p.reference = g;
  p.conn = cb.conn;
  p.k = k;
  p.h = g.g() - gt.g();
  p.a = cb.conn.gamma - cbt.conn.gamma;
  TensorField d = cb.rm, dt = cbt.rm;
  for (int l = 0; l <= 2 * k; ++l) {
    if (l > 0) {
      d = covariant_derivative(d, cb.conn);
      dt = covariant_derivative(dt, cbt.conn);
    }
    p.x.push_back(d - dt);
  }
  p.z0 = cb.s - cbt.s;
  p.z_top = covariant_derivative(cb.s, cb.conn, 2 * k) - covariant_derivative(cbt.s, cbt.conn, 2 * k);
  return p;
}

struct Energies {
  double G = 0.0, H = 0.0, K = 0.0, E = 0.0;
};

// G = ∥h∥² + ∥∇^k A∥², H = ∥X_0∥² + ∥X_2k∥², K = ∥Z_2k∥², E = G + H + rK.
// At k = 0 the two H terms are the same tensor and it is counted once.
inline Energies energies(const DifferencePack& p, double r) {
  if (!(r >= 0.0)) throw DomainError("energy weight r must be >= 0");
  const MetricField& g = p.reference;
  Energies e;
  e.G = l2_norm_squared(p.h, g) + l2_norm_squared(covariant_derivative(p.a, p.conn, p.k), g);
  e.H = l2_norm_squared(p.x.front(), g);
  if (p.k > 0) e.H += l2_norm_squared(p.x.back(), g);
  e.K = l2_norm_squared(p.z_top, g);
  e.E = e.G + e.H + r * e.K;
  return e;
}

struct Weights {
  double r = 0.0, eps = 0.0, a = 0.0, b = 0.0;
};

// Deterministic choice inside the admissible region:
//   r = max(0, −4α/(1+2α(n−1))), ε = 1/(2(r+2)).
inline Weights choose_weights(double alpha, int n) {
  if (n < 2) throw DomainError("dimension must be >= 2");
  if (!std::isfinite(alpha)) throw DomainError("alpha must be finite");
  const double denom = 1.0 + 2.0 * alpha * (n - 1);
  if (!(alpha > -1.0 / (2.0 * (n - 1))) || !(denom > 0.0))
    throw OutOfRange("alpha must exceed -1/(2(n-1)) = " + std::to_string(-1.0 / (2.0 * (n - 1))));
  Weights w;
  w.r = std::max(0.0, -4.0 * alpha / denom);
  w.eps = 1.0 / (2.0 * (w.r + 2.0));
  w.a = -2.0 * (1.0 - w.eps * (w.r + 2.0));
  w.b = -2.0 * (2.0 * alpha + w.r * denom);
  return w;
}

// Lower bound on r from the weight inequalities; r must exceed it strictly
// unless α = 0.
inline double weight_r_bound(double alpha, int n) { return -2.0 * alpha / (1.0 + 2.0 * alpha * (n - 1)); }

// ---------------------------------------------------------------------------
// Cross-curvature pack

struct XcfPack {
  MetricField reference;
  TensorField w;  // V − Ṽ
  TensorField h;
  TensorField a;
  TensorField u;  // (1,2): U^a_ij
  double c_fit = 0.0;  // max over nodes of |U| / (|A| + |W|)
};

// U^a_ij = (E^{ab} − Ẽ^{ab})∇̃_bṼ_ij − E^{ab}A^p_{bi}Ṽ_pj − E^{ab}A^p_{bj}Ṽ_ip
inline TensorField xcf_u(const TensorField& e_up, const TensorField& et_up, const TensorField& dvt,
                         const TensorField& a, const TensorField& vt) {
  const ChartGrid& grid = a.grid();
  const int d = grid.dim;
  TensorField u(grid, {1, 2});
  parallel_nodes(grid.nodes(), [&](std::size_t n) {
    const auto e = e_up.node(n), et = et_up.node(n), dv = dvt.node(n), an = a.node(n), v = vt.node(n);
    auto un = u.node(n);
    for (int s = 0; s < d; ++s)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int b = 0; b < d; ++b) {
            acc += (e[s * d + b] - et[s * d + b]) * dv[(i * d + j) * d + b];
            for (int p = 0; p < d; ++p)
              acc -= e[s * d + b] * (an[(p * d + b) * d + i] * v[p * d + j] + an[(p * d + b) * d + j] * v[i * d + p]);
          }
          un[(s * d + i) * d + j] = acc;
        }
  });
  return u;
}

inline double u_bound_ratio(const TensorField& u, const TensorField& a, const TensorField& w, const MetricField& g) {
  const TensorField nu = pointwise_norm_squared(u, g), na = pointwise_norm_squared(a, g),
                    nw = pointwise_norm_squared(w, g);
  double c = 0.0;
  for (std::size_t n = 0; n < u.nodes(); ++n) {
    const double den = std::sqrt(na.at(n, 0)) + std::sqrt(nw.at(n, 0));
    if (den > 1e-14) c = std::max(c, std::sqrt(nu.at(n, 0)) / den);
  }
  return c;
}

inline XcfPack xcf_pack(const MetricField& g, const MetricField& gt) {
  require_same_grid(g.grid(), gt.grid());
  const CurvatureBundle cb = curvature(g), cbt = curvature(gt);
  const XcfAlgebra alg = xcf_algebra(g, cb), algt = xcf_algebra(gt, cbt);
  XcfPack p;
  p.reference = g;
  p.w = alg.v - algt.v;
  p.h = g.g() - gt.g();
  p.a = cb.conn.gamma - cbt.conn.gamma;
  p.u = xcf_u(alg.e_raised, algt.e_raised, covariant_derivative(algt.v, cbt.conn), p.a, algt.v);
  p.c_fit = u_bound_ratio(p.u, p.a, p.w, g);
  return p;
}

// ∥W∥² + ∥h∥² + ∥A∥²
inline double xcf_energy(const XcfPack& p) {
  return l2_norm_squared(p.w, p.reference) + l2_norm_squared(p.h, p.reference) + l2_norm_squared(p.a, p.reference);
}

namespace frame {

// |T|² with every slot raised by the metric of `geo`.
inline double norm_squared(const Tensor& t, const Geometry& geo) {
  SmallMatrix gi(3, 3);
  for (int i = 0; i < 9; ++i) gi(i / 3, i % 3) = geo.gi[i];
  std::vector<double> a = t.c, b(t.c.size());
  const IndexSpace space{3, t.order};
  for (int s = 0; s < t.order; ++s) {
    transform_slot(a, b, space, s, gi);
    std::swap(a, b);
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) acc += a[c] * t.c[c];
  return acc;
}

// Lowers the first slot of a (1,r) array with g.
inline Tensor lower_first(const std::vector<double>& up, int order, const Geometry& geo) {
  Tensor out(order);
  const std::size_t rest = out.c.size() / 3;
  for (int a = 0; a < 3; ++a)
    for (std::size_t t = 0; t < rest; ++t)
      for (int p = 0; p < 3; ++p) out.c[a * rest + t] += geo.g[a * 3 + p] * up[p * rest + t];
  return out;
}

}  // namespace frame

// Frame version; A and U are stored with their upper index lowered by the
// reference metric, which leaves every norm unchanged.
struct FrameXcfPack {
  frame::Tensor w, h, a, u;
  double volume = 0.0;  // of the reference
  double c_fit = 0.0;
  double norm_w = 0.0, norm_h = 0.0, norm_a = 0.0;  // L² norms squared

  double energy() const { return norm_w + norm_h + norm_a; }
};

inline FrameXcfPack frame_xcf_pack(const FrameMetric& f, const FrameMetric& ft) {
  const frame::Geometry geo = frame::geometry(f), geot = frame::geometry(ft);
  const XcfPoint pt = frame::xcf(geo), ptt = frame::xcf(geot);
  FrameXcfPack p;
  p.volume = f.volume();
  p.w = frame::from_matrix(pt.v - ptt.v);
  p.h = frame::metric_tensor(geo) - frame::metric_tensor(geot);
  std::vector<double> a_up(27);
  for (std::size_t c = 0; c < 27; ++c) a_up[c] = geo.gamma[c] - geot.gamma[c];
  p.a = frame::lower_first(a_up, 3, geo);
  const frame::Tensor vt = frame::from_matrix(ptt.v);
  const frame::Tensor dvt = frame::covariant_derivative(vt, geot);
  std::vector<double> u_up(27, 0.0);
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int b = 0; b < 3; ++b) {
          acc += (pt.e_raised(s, b) - ptt.e_raised(s, b)) * dvt.c[(i * 3 + j) * 3 + b];
          for (int q = 0; q < 3; ++q)
            acc -= pt.e_raised(s, b) *
                   (a_up[(q * 3 + b) * 3 + i] * vt.c[q * 3 + j] + a_up[(q * 3 + b) * 3 + j] * vt.c[i * 3 + q]);
        }
        u_up[(s * 3 + i) * 3 + j] = acc;
      }
  p.u = frame::lower_first(u_up, 3, geo);
  p.norm_w = frame::norm_squared(p.w, geo) * p.volume;
  p.norm_h = frame::norm_squared(p.h, geo) * p.volume;
  p.norm_a = frame::norm_squared(p.a, geo) * p.volume;
  const double den = std::sqrt(frame::norm_squared(p.a, geo)) + std::sqrt(frame::norm_squared(p.w, geo));
  if (den > 1e-14) p.c_fit = std::sqrt(frame::norm_squared(p.u, geo)) / den;
  return p;
}

// ---------------------------------------------------------------------------
// Energy series and the Grönwall audit

struct EnergySeries {
  std::vector<double> times, G, H, K, E;
  double r = 0.0, eps = 0.0;
  double c_fit = 0.0;
  double max_violation = 0.0;

  std::size_t size() const { return times.size(); }

  void push(double t, double g, double h, double k) {
    times.push_back(t);
    G.push_back(g);
    H.push_back(h);
    K.push_back(k);
    E.push_back(g + h + r * k);
  }
  void push(double t, const Energies& e) { push(t, e.G, e.H, e.K); }
};

enum class Verdict { pass, pass_with_floor, fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::pass_with_floor: return "pass_with_floor";
    case Verdict::fail: return "fail";
  }
  return "?";
}

struct AuditOptions {
  double floor = 0.0;       // energies at or below count as identically zero
  bool identical = false;   // legs started from the same data
  double tolerance = 1e-9;  // on max_violation
};

struct AuditResult {
  double c_fit = 0.0;
  double max_violation = 0.0;
  Verdict verdict = Verdict::fail;
  std::vector<double> c_running;  // running max of consecutive slopes
};

inline constexpr double kLogGuard = 1e-300;

inline AuditResult gronwall_audit(const EnergySeries& s, const AuditOptions& opt = {}) {
  const std::size_t n = s.size();
  if (n < 3) throw DomainError("Grönwall audit needs at least 3 samples");
  if (s.E.size() != n) throw DomainError("energy series is ragged");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.E[i] >= 0.0)) throw DomainError("energy series has a negative or non-finite sample");
    if (i > 0 && !(s.times[i] > s.times[i - 1])) throw DomainError("energy series times must increase");
  }
  AuditResult r;
  r.c_running.assign(n, 0.0);
  double c = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 1; i < n; ++i) {
    if (s.E[i - 1] > kLogGuard && s.E[i] > kLogGuard) {
      c = std::max(c, std::log(s.E[i] / s.E[i - 1]) / (s.times[i] - s.times[i - 1]));
      any = true;
    }
    r.c_running[i] = any ? c : 0.0;
  }
  r.c_fit = any ? c : 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.E[i] > kLogGuard)) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(s.E[j] > kLogGuard)) continue;
      worst = std::max(worst, std::log(s.E[j]) - std::log(s.E[i]) - r.c_fit * (s.times[j] - s.times[i]));
    }
  }
  r.max_violation = worst;
  const double top = *std::max_element(s.E.begin(), s.E.end());
  if (opt.identical)
    r.verdict = top <= opt.floor ? Verdict::pass_with_floor : Verdict::fail;
  else if (top <= opt.floor)
    r.verdict = Verdict::pass_with_floor;
  else
    r.verdict = worst <= opt.tolerance ? Verdict::pass : Verdict::fail;
  return r;
}

// E(t) = Σ∥X_i∥² + Σ∥Y_j∥² on a shared time grid; X parts land in H and Y
// parts in G.
inline EnergySeries abstract_energy_audit(const std::vector<double>& times,
                                          const std::vector<std::vector<TensorField>>& x_parts,
                                          const std::vector<std::vector<TensorField>>& y_parts,
                                          const std::vector<MetricField>& reference) {
  const std::size_t n = times.size();
  if (reference.size() != n) throw DomainError("reference trajectory does not match the time grid");
  for (const auto* parts : {&x_parts, &y_parts})
    for (const auto& p : *parts)
      if (p.size() != n) throw DomainError("energy part does not match the time grid");
  EnergySeries s;
  for (std::size_t t = 0; t < n; ++t) {
    double gx = 0.0, gy = 0.0;
    for (const auto& p : x_parts) gx += l2_norm_squared(p[t], reference[t]);
    for (const auto& p : y_parts) gy += l2_norm_squared(p[t], reference[t]);
    s.push(times[t], gy, gx, 0.0);
  }
  return s;
}

// CSV columns t, G, H, K, E, C_fit_running with round-trip formatting.
inline void write_energy_csv(std::ostream& os, const EnergySeries& s, const AuditResult& r) {
  os << "# schema curveflow.energy.v1\n";
  os << "t,G,H,K,E,C_fit_running\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < s.size(); ++i)
    os << num(s.times[i]) << ',' << num(s.G[i]) << ',' << num(s.H[i]) << ',' << num(s.K[i]) << ',' << num(s.E[i])
       << ',' << num(i < r.c_running.size() ? r.c_running[i] : 0.0) << '\n';
}

}  // namespace curveflow
