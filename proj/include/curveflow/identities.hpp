#pragma once

// Registry of discrete identity checks run by `curveflow identities`.
//
// Two kinds of record:
//   exact       identities that hold on the discrete operators; pass when the
//               defect is at roundoff (tolerance relative to the field scale)
//   refinement  identities that hold up to truncation error; pass when the
//               coarse/fine defect ratio is 2^order within the band and the
//               fine defect is below an absolute ceiling

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "curveflow/fields.hpp"
#include "curveflow/flows.hpp"
#include "curveflow/homogeneous.hpp"
#include "curveflow/report.hpp"
#include "curveflow/runtime.hpp"

namespace curveflow {

struct SuiteOptions {
  CurvatureConvention convention = CurvatureConvention::standard;
};

struct IdentityCheck {
  std::string name;
  std::string scope;
  std::function<CheckRecord(const SuiteOptions&)> run;
};

namespace ident {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline std::string cube_label(int dim, int n) { return std::to_string(n) + "^" + std::to_string(dim); }
inline std::string refine_label(int dim, int n1, int n2) { return cube_label(dim, n1) + "->" + cube_label(dim, n2); }

inline CheckRecord exact(std::string grid, int fd_order, double defect, double tolerance) {
  CheckRecord r;
  r.grid = std::move(grid);
  r.fd_order = fd_order;
  r.defect = defect;
  r.tolerance = tolerance;
  r.pass = defect <= tolerance;
  return r;
}

inline CheckRecord refinement(std::string grid, int fd_order, int order, double coarse, double fine, double ceiling,
                              double band) {
  CheckRecord r;
  r.grid = std::move(grid);
  r.fd_order = fd_order;
  r.defect = fine;
  r.tolerance = ceiling;
  r.ratio = coarse / fine;
  r.expected_ratio = std::pow(2.0, order);
  r.pass = fine <= ceiling && *r.ratio > *r.expected_ratio * (1.0 - band) && *r.ratio < *r.expected_ratio * (1.0 + band);
  r.note = "band " + std::to_string(static_cast<int>(std::lround(band * 100))) + "%";
  return r;
}

// Low-mode conformal factor shared by the 2D checks.
inline FourierScalar phi2(double amplitude) {
  FourierScalar phi;
  FourierScalar::Term a;
  a.k[0] = 1;
  a.amplitude = amplitude;
  a.phase = 0.2;
  FourierScalar::Term b;
  b.k[1] = 1;
  b.amplitude = 0.7 * amplitude;
  b.phase = 1.1;
  phi.terms = {a, b};
  return phi;
}

inline MetricField perturbed(int dim, int n, std::uint64_t seed, double amplitude = 0.1) {
  std::mt19937_64 rng(seed);
  return perturbed_flat(ChartGrid::cube(dim, n, kTwoPi), rng, amplitude);
}

// Max over nodes and index tuples of the Riemann symmetry defects, relative to max|Rm|.
inline double riemann_symmetry_defect(const TensorField& rm, bool bianchi_only) {
  const int d = rm.dim();
  auto at = [&](std::size_t n, int a, int b, int c, int e) { return rm.at(n, ((a * d + b) * d + c) * d + e); };
  double worst = 0.0;
  for (std::size_t n = 0; n < rm.nodes(); ++n)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e) {
            const double v = at(n, a, b, c, e);
            if (bianchi_only) {
              worst = std::max(worst, std::abs(v + at(n, b, c, a, e) + at(n, c, a, b, e)));
            } else {
              worst = std::max({worst, std::abs(v + at(n, b, a, c, e)), std::abs(v + at(n, a, b, e, c)),
                                std::abs(v - at(n, c, e, a, b))});
            }
          }
  return worst / std::max(rm.max_abs(), 1e-300);
}

inline double gauss_defect(int n, const SuiteOptions& o) {
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const FourierScalar phi = phi2(0.2);
  const TensorField s = curvature(conformal_metric(grid, phi), o.convention).s;
  double err = 0.0;
  for (std::size_t k = 0; k < grid.nodes(); ++k) {
    const auto x = grid.position(k);
    // S = 2K, K = −e^{−2φ}Δ₀φ
    err = std::max(err, std::abs(s.at(k, 0) + 2.0 * std::exp(-2.0 * phi(grid, x)) * phi.flat_laplacian(grid, x)));
  }
  return err;
}

inline double christoffel_defect(int n) {
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const FourierScalar phi = phi2(0.1);
  const Connection c = christoffel(conformal_metric(grid, phi));
  double err = 0.0;
  for (std::size_t node = 0; node < grid.nodes(); ++node) {
    const auto x = grid.position(node);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          double v = 0.0;
          if (k == i) v += phi.derivative(grid, x, j);
          if (k == j) v += phi.derivative(grid, x, i);
          if (i == j) v -= phi.derivative(grid, x, k);
          err = std::max(err, std::abs(c.gamma.at(node, (k * 2 + i) * 2 + j) - v));
        }
  }
  return err;
}

inline double commutator_refined(int n, Rank rank, const SuiteOptions& o) {
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const MetricField g = conformal_metric(grid, phi2(0.2));
  std::mt19937_64 rng(40);
  return commutator_residual(smooth_tensor(grid, rank, rng, 1.0, 1), g, curvature(g, o.convention)).max_abs();
}

inline double second_bianchi_defect(int n, const SuiteOptions& o) {
  const MetricField g = perturbed(3, n, 21);
  const CurvatureBundle cb = curvature(g, o.convention);
  // div Rc − ½ dS; differs from div E by the discrete product rule on Sg
  TensorField d = divergence(cb.rc, g, cb.conn);
  const TensorField ds = covariant_derivative(cb.s, cb.conn);
  d.axpy(-0.5, ds);
  return d.max_abs();
}

inline double einstein_divergence_defect(int n, const SuiteOptions& o) {
  const MetricField g = perturbed(3, n, 22);
  const CurvatureBundle cb = curvature(g, o.convention);
  return divergence(cb.e, g, cb.conn).max_abs();
}

inline double ibp_defect(int n) {
  std::mt19937_64 rng(31);
  const MetricField g = perturbed_flat(ChartGrid::cube(2, n, kTwoPi), rng, 0.1);
  const TensorField w = smooth_symmetric(g.grid(), rng, 1.0);
  const Connection c = christoffel(g);
  const double grad = l2_norm_squared(covariant_derivative(w, c), g);
  return std::abs(l2_inner(laplacian(w, g, c), w, g) + grad) / grad;
}

inline double linearization_defect(int dim, int n, const SuiteOptions& o) {
  std::mt19937_64 rng(50 + dim);
  const ChartGrid grid = ChartGrid::cube(dim, n, kTwoPi);
  const MetricField g = perturbed_flat(grid, rng, 0.1);
  const TensorField h = smooth_symmetric(grid, rng, 1.0, 1);
  const double s = 1e-4;
  TensorField fd = curvature(MetricField(g.g() + s * h), o.convention).rm;
  fd -= curvature(MetricField(g.g() - s * h), o.convention).rm;
  fd *= 1.0 / (2.0 * s);
  return (linearized_riemann(g, h) - fd).max_abs() / fd.max_abs();
}

inline double covariance_defect(int n, const SuiteOptions& o) {
  std::mt19937_64 rng(60);
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const MetricField g = perturbed_flat(grid, rng, 0.1);
  const TensorField x = smooth_tensor(grid, {1, 0}, rng, 1.0, 1);
  const CurvatureBundle cb = curvature(g, o.convention);
  const TensorField lg = symmetrized(lie_derivative(g.g(), x, cb.conn));
  const TensorField lr = lie_derivative(cb.rm, x, cb.conn);
  return (linearized_riemann(g, cb, lg) - lr).max_abs() / lr.max_abs();
}

inline std::string frame_label(const FrameMetric& f) {
  return "frame su2(" + fmt17(f.coeffs[0]) + "," + fmt17(f.coeffs[1]) + "," + fmt17(f.coeffs[2]) + ")";
}

inline RunOptions frame_run(double t_end, double dt) {
  RunOptions o;
  o.t_end = t_end;
  o.dt = dt;
  return o;
}

inline CheckRecord evolution(EvolutionIdentity which) {
  if (which == EvolutionIdentity::christoffel_ev) {
    const MetricField g = conformal_metric(ChartGrid::cube(2, 16, kTwoPi), phi2(0.1));
    const Trajectory c = run_flow(g, FlowSpec::ricci(), frame_run(0.004, 1e-3));
    const Trajectory f = run_flow(g, FlowSpec::ricci(), frame_run(0.004, 5e-4));
    CheckRecord r = refinement(cube_label(2, 16) + " ricci dt 1e-3->5e-4", 4, 2,
                               evolution_identity_check(c, which).defect, evolution_identity_check(f, which).defect,
                               1e-3, 0.2);
    return r;
  }
  const FrameMetric fm = FrameMetric::su2(1.0, 1.08, 0.93);
  const Trajectory c = run_flow(fm, FlowSpec::xcf(1), frame_run(0.02, 2e-3));
  const Trajectory f = run_flow(fm, FlowSpec::xcf(1), frame_run(0.02, 1e-3));
  const IdentityDefect dc = evolution_identity_check(c, which), df = evolution_identity_check(f, which);
  CheckRecord r = refinement(frame_label(fm) + " xcf dt 2e-3->1e-3", 0, 2, dc.defect, df.defect, 1e-4 * df.scale, 0.2);
  return r;
}

}  // namespace ident

inline const std::vector<IdentityCheck>& identity_registry() {
  using namespace ident;
  static const std::vector<IdentityCheck> checks{
      {"riemann_symmetries", "symmetry",
       [](const SuiteOptions& o) {
         double worst = 0.0;
         for (int dim : {2, 3, 4})
           worst = std::max(worst, riemann_symmetry_defect(curvature(perturbed(dim, dim == 4 ? 8 : 10, 100 + dim), o.convention).rm, false));
         return exact("10^2,10^3,8^4", 4, worst, 1e-12);
       }},
      {"scaling_laws", "symmetry",
       [](const SuiteOptions& o) {
         const MetricField g = perturbed(3, 10, 9);
         const double c = 3.7;
         const CurvatureBundle a = curvature(g, o.convention), b = curvature(MetricField(c * g.g()), o.convention);
         const double d = std::max({(b.rm - c * a.rm).max_abs() / (c * a.rm.max_abs()),
                                    (b.rc - a.rc).max_abs() / a.rc.max_abs(),
                                    (b.s - (1.0 / c) * a.s).max_abs() / a.s.max_abs()});
         return exact(cube_label(3, 10), 4, d, 1e-12);
       }},
      {"first_bianchi", "bianchi",
       [](const SuiteOptions& o) {
         double worst = 0.0;
         for (int dim : {3, 4})
           worst = std::max(worst, riemann_symmetry_defect(curvature(perturbed(dim, dim == 4 ? 8 : 10, 110 + dim), o.convention).rm, true));
         return exact("10^3,8^4", 4, worst, 1e-12);
       }},
      {"contracted_second_bianchi", "bianchi",
       [](const SuiteOptions& o) {
         return refinement(refine_label(3, 16, 32), 4, 4, second_bianchi_defect(16, o), second_bianchi_defect(32, o), 1e-3, 0.25);
       }},
      {"einstein_divergence_free", "bianchi",
       [](const SuiteOptions& o) {
         return refinement(refine_label(3, 16, 32), 4, 4, einstein_divergence_defect(16, o), einstein_divergence_defect(32, o), 1e-3, 0.25);
       }},
      {"metric_compatibility", "connection",
       [](const SuiteOptions&) {
         const MetricField g = perturbed(3, 12, 11);
         return exact(cube_label(3, 12), 4, covariant_derivative(g.g(), christoffel(g)).max_abs(), 1e-12);
       }},
      {"christoffel_conformal", "connection",
       [](const SuiteOptions&) {
         return refinement(refine_label(2, 16, 32), 4, 4, christoffel_defect(16), christoffel_defect(32), 1e-4, 0.2);
       }},
      {"gauss_curvature_2d", "gauss",
       [](const SuiteOptions& o) {
         return refinement(refine_label(2, 16, 32), 4, 4, gauss_defect(16, o), gauss_defect(32, o), 1e-3, 0.2);
       }},
      {"commutator_scalar", "commutator",
       [](const SuiteOptions& o) {
         const MetricField g = perturbed(3, 10, 7);
         std::mt19937_64 rng(7);
         const TensorField f = smooth_tensor(g.grid(), {0, 0}, rng, 1.0);
         return exact(cube_label(3, 10), 4, commutator_residual(f, g, curvature(g, o.convention)).max_abs(), 1e-12);
       }},
      {"commutator_vector", "commutator",
       [](const SuiteOptions& o) {
         return refinement(refine_label(2, 16, 32), 4, 4, commutator_refined(16, {1, 0}, o), commutator_refined(32, {1, 0}, o), 1e-3, 0.3);
       }},
      {"commutator_covector", "commutator",
       [](const SuiteOptions& o) {
         return refinement(refine_label(2, 16, 32), 4, 4, commutator_refined(16, {0, 1}, o), commutator_refined(32, {0, 1}, o), 1e-3, 0.3);
       }},
      {"commutator_mixed", "commutator",
       [](const SuiteOptions& o) {
         return refinement(refine_label(2, 16, 32), 4, 4, commutator_refined(16, {1, 1}, o), commutator_refined(32, {1, 1}, o), 1e-3, 0.3);
       }},
      {"ibp_base_case", "ibp",
       [](const SuiteOptions&) { return refinement(refine_label(2, 16, 32), 4, 4, ibp_defect(16), ibp_defect(32), 1e-3, 0.3); }},
      {"interpolation_corpus", "ibp",
       [](const SuiteOptions&) {
         std::mt19937_64 rng(2024);
         const Rank ranks[] = {{0, 0}, {1, 0}, {0, 2}, {1, 1}, {0, 3}};
         double worst = -1e300;
         for (int trial = 0; trial < 50; ++trial) {
           const int dim = 2 + trial % 2;
           const MetricField g = MetricField::flat(ChartGrid::cube(dim, dim == 2 ? 16 : 8, 1.0 + 0.5 * (trial % 3)));
           const TensorField w = smooth_tensor(g.grid(), ranks[trial % 5], rng, 1.0, 3, 3);
           const Connection c = christoffel(g);
           const double grad = l2_norm_squared(covariant_derivative(w, c), g);
           const double bound = std::sqrt(l2_norm_squared(w, g) * l2_norm_squared(laplacian(w, g, c), g));
           worst = std::max(worst, (grad - bound) / std::max(1.0, bound));
         }
         CheckRecord r = exact("50 flat fields, 16^2 and 8^3", 4, std::max(0.0, worst), 1e-12);
         r.note = "max of (|∇W|² − |W||ΔW|)/max(1,|W||ΔW|)";
         return r;
       }},
      {"linearized_riemann", "linearization",
       [](const SuiteOptions& o) {
         CheckRecord r2 = refinement(refine_label(2, 16, 32), 4, 4, linearization_defect(2, 16, o), linearization_defect(2, 32, o), 1e-3, 0.3);
         CheckRecord r3 = refinement(refine_label(3, 10, 20), 4, 4, linearization_defect(3, 10, o), linearization_defect(3, 20, o), 1e-3, 0.3);
         CheckRecord& worse = r2.pass ? r3 : r2;
         worse.grid = r2.grid + "," + r3.grid;
         return worse;
       }},
      {"diffeomorphism_covariance", "linearization",
       [](const SuiteOptions& o) {
         return refinement(refine_label(2, 16, 32), 4, 4, covariance_defect(16, o), covariance_defect(32, o), 5e-3, 0.3);
       }},
      {"xcdef_grid", "xcf",
       [](const SuiteOptions& o) {
         double worst = 0.0;
         for (int n : {12, 24}) {
           const MetricField g = perturbed(3, n, 500);
           const XcfAlgebra a = xcf_algebra(g, curvature(g, o.convention));
           worst = std::max(worst, a.xcdef_defect() / a.x.max_abs());
         }
         return exact("12^3,24^3", 4, worst, 1e-10);
       }},
      {"xcdef_frame", "xcf",
       [](const SuiteOptions&) {
         double worst = 0.0;
         for (const auto& c : {std::array<double, 3>{1.0, 1.08, 0.93}, {0.95, 1.0, 1.1}, {1.1, 0.9, 1.0}}) {
           const frame::Geometry geo = frame::geometry(FrameMetric::su2(c[0], c[1], c[2]));
           const XcfPoint pt = frame::xcf(geo);
           worst = std::max(worst, (pt.x - pt.x_alt).cwiseAbs().maxCoeff() / pt.x.cwiseAbs().maxCoeff());
         }
         return exact("frame su2 Berger, 3 metrics within 10% of round", 0, worst, 1e-12);
       }},
      {"xcf_space_form", "xcf",
       [](const SuiteOptions&) {
         const FrameMetric f = FrameMetric::su2(1, 1, 1);
         const frame::Geometry geo = frame::geometry(f);
         const XcfPoint pt = frame::xcf(geo);
         double d = std::abs(pt.p + 1.0);
         for (int i = 0; i < 3; ++i)
           for (int j = 0; j < 3; ++j) {
             const double g = geo.g[i * 3 + j];
             d = std::max({d, std::abs(pt.e(i, j) + g), std::abs(pt.v(i, j) + g), std::abs(pt.x(i, j) - g)});
           }
         const auto rhs = frame_flow_rhs(f, FlowSpec::xcf(1));
         for (int i = 0; i < 3; ++i) d = std::max(d, std::abs(rhs[i] + 2.0 * f.coeffs[i]));
         CheckRecord r = exact("frame su2(1,1,1)", 0, d, 1e-10);
         r.note = "(E,V,P,X) = (-g,-g,-1,g) and xcf rhs = -2g";
         return r;
       }},
      {"l2_gradient_frame", "flows",
       [](const SuiteOptions&) {
         // c in d𝔉(h) = −c (rhs, h): c = 2 along every symmetric direction
         std::array<double, 9> g0{1.0, 0.1, 0.0, 0.1, 1.2, 0.05, 0.0, 0.05, 0.9};
         double worst = 0.0;
         auto functional = [](const std::array<double, 9>& g9) {
           const frame::Geometry geo = frame::geometry(FrameMetric::su2(1, 1, 1).structure, g9);
           SmallMatrix m(3, 3);
           for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = g9[i];
           return frame::norm_squared(geo.rm, geo) * std::sqrt(m.determinant());
         };
         const frame::Geometry geo = frame::geometry(FrameMetric::su2(1, 1, 1).structure, g0);
         const frame::Tensor rhs = frame::tensor_rhs(geo, FlowSpec::l2());
         SmallMatrix gi(3, 3);
         for (int i = 0; i < 9; ++i) gi(i / 3, i % 3) = geo.gi[i];
         SmallMatrix g(3, 3);
         for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = g0[i];
         for (int a = 0; a < 3; ++a)
           for (int b = a; b < 3; ++b) {
             std::array<double, 9> h{};
             h[a * 3 + b] = h[b * 3 + a] = 1.0;
             const double s = 1e-5;
             std::array<double, 9> gp = g0, gm = g0;
             for (int i = 0; i < 9; ++i) {
               gp[i] += s * h[i];
               gm[i] -= s * h[i];
             }
             const double deriv = (functional(gp) - functional(gm)) / (2 * s);
             double inner = 0.0;
             for (int i = 0; i < 3; ++i)
               for (int j = 0; j < 3; ++j)
                 for (int k = 0; k < 3; ++k)
                   for (int l = 0; l < 3; ++l) inner += gi(i, k) * gi(j, l) * rhs.c[i * 3 + j] * h[k * 3 + l];
             inner *= std::sqrt(g.determinant());
             worst = std::max(worst, std::abs(-deriv / inner - 2.0));
           }
         CheckRecord r = exact("frame su2, non-diagonal metric, 6 directions", 0, worst, 1e-6);
         r.note = "|c - 2|";
         return r;
       }},
      {"xconnev", "evolution", [](const SuiteOptions&) { return evolution(EvolutionIdentity::xconnev); }},
      {"xvev", "evolution", [](const SuiteOptions&) { return evolution(EvolutionIdentity::xvev); }},
      {"einstein_ev", "evolution", [](const SuiteOptions&) { return evolution(EvolutionIdentity::einstein_ev); }},
      {"christoffel_ev", "evolution", [](const SuiteOptions&) { return evolution(EvolutionIdentity::christoffel_ev); }},
  };
  return checks;
}

inline std::vector<std::string> identity_scopes() {
  std::vector<std::string> out;
  for (const IdentityCheck& c : identity_registry())
    if (std::find(out.begin(), out.end(), c.scope) == out.end()) out.push_back(c.scope);
  return out;
}

// `selector` is "all", a scope, or a single check name.
inline std::vector<CheckRecord> run_identities(const std::string& selector, const SuiteOptions& opt = {}) {
  std::vector<CheckRecord> out;
  bool known = selector == "all";
  for (const IdentityCheck& c : identity_registry())
    known = known || c.scope == selector || c.name == selector;
  if (!known) throw ConfigError("unknown identity scope or check '" + selector + "'");
  for (const IdentityCheck& c : identity_registry()) {
    if (selector != "all" && c.scope != selector && c.name != selector) continue;
    CheckRecord r;
    try {
      r = c.run(opt);
    } catch (const Error& e) {
      r.pass = false;
      r.defect = std::nan("");
      r.note = std::string("error: ") + e.what();
    }
    r.check = c.name;
    r.scope = c.scope;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace curveflow
