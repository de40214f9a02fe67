#pragma once

// Explicit RK4 integration of flow trajectories on the grid and frame
// backends, checkpoints, pair audits and the evolution-identity checks.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curveflow/prolongation.hpp"
#include "curveflow/snapshot.hpp"

namespace curveflow {

enum class Backend { grid, frame };

inline const char* to_string(Backend b) { return b == Backend::grid ? "grid" : "frame"; }

// safety · min Δx^order / (4^order · dim)
inline double stable_dt(const ChartGrid& grid, int operator_order, double safety) {
  if (operator_order != 2 && operator_order != 4 && operator_order != 6)
    throw DomainError("unsupported operator order " + std::to_string(operator_order));
  if (!(safety > 0.0 && safety <= 1.0)) throw DomainError("safety factor must lie in (0, 1]");
  return safety * std::pow(grid.min_spacing(), operator_order) / (std::pow(4.0, operator_order) * grid.dim);
}

// ---------------------------------------------------------------------------
// RK4

using FrameState = std::array<double, 3>;

inline FrameState axpy(const FrameState& y, double s, const FrameState& k) {
  return {y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]};
}

inline TensorField axpy(const TensorField& y, double s, const TensorField& k) {
  TensorField out = y;
  out.axpy(s, k);
  return out;
}

inline FrameState rk4_combine(const FrameState& y, double dt, const FrameState& k1, const FrameState& k2,
                              const FrameState& k3, const FrameState& k4) {
  FrameState out;
  for (int i = 0; i < 3; ++i) out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

inline TensorField rk4_combine(const TensorField& y, double dt, const TensorField& k1, const TensorField& k2,
                               const TensorField& k3, const TensorField& k4) {
  TensorField out = y;
  auto& o = out.data();
  const auto &a = k1.data(), &b = k2.data(), &c = k3.data(), &d = k4.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
  return out;
}

inline bool finite(const FrameState& y) { return std::isfinite(y[0]) && std::isfinite(y[1]) && std::isfinite(y[2]); }
inline bool finite(const TensorField& y) { return y.all_finite(); }

// Classical four-stage step with the first stage supplied by the caller.
template <class State, class Rhs>
State rk4_step(const State& y, Rhs&& f, double dt, const State& k1) {
  if (!finite(k1)) throw NonFinite("non-finite right-hand side");
  const State k2 = f(axpy(y, 0.5 * dt, k1));
  if (!finite(k2)) throw NonFinite("non-finite right-hand side");
  const State k3 = f(axpy(y, 0.5 * dt, k2));
  if (!finite(k3)) throw NonFinite("non-finite right-hand side");
  const State k4 = f(axpy(y, dt, k3));
  if (!finite(k4)) throw NonFinite("non-finite right-hand side");
  State out = rk4_combine(y, dt, k1, k2, k3, k4);
  if (!finite(out)) throw NonFinite("non-finite state after step");
  return out;
}

template <class State, class Rhs>
State rk4_step(const State& y, Rhs&& f, double dt) {
  return rk4_step(y, f, dt, f(y));
}

// Positive-definiteness after a step, reported as LostPositivity.
inline MetricField checked_metric(TensorField g) {
  try {
    return MetricField(std::move(g));
  } catch (const SingularMetric& e) {
    throw LostPositivity(e.node, e.eigenvalue);
  }
}

inline void check_frame_state(const FrameState& y) {
  for (int i = 0; i < 3; ++i)
    if (!(y[i] > 0.0)) throw LostPositivity(static_cast<std::size_t>(i), y[i]);
}

// ---------------------------------------------------------------------------
// Trajectories

struct StepDiagnostics {
  double t = 0.0;
  double min_eig = 0.0;        // smallest metric eigenvalue
  double curvature_sup = 0.0;  // max pointwise |Rm|
  double functional = 0.0;     // ∫|Rm|² dμ
  double rhs_sup = 0.0;        // max pointwise |∂g| (frame: |ȧ/a| over the diagonal)
  double lambda_margin = std::numeric_limits<double>::quiet_NaN();  // xcf only
  double min_sectional = std::numeric_limits<double>::quiet_NaN();  // frame only
  double scalar = std::numeric_limits<double>::quiet_NaN();         // frame only
};

struct Trajectory {
  FlowSpec spec;
  Backend backend = Backend::grid;
  ChartGrid grid;     // grid backend
  FrameMetric frame;  // frame backend: structure and volume normalisation
  double dt = 0.0;
  int sample_every = 1;
  std::vector<long> steps;
  std::vector<double> times;
  std::vector<TensorField> grid_states;
  std::vector<FrameState> frame_states;
  std::vector<StepDiagnostics> diagnostics;  // one per step taken, plus the start
  double curvature_initial = 0.0;
  bool capped = false;
  std::optional<std::string> aborted;  // definiteness loss on xcf runs
  TensorField static_rhs;              // static-only grid runs
  FrameState static_frame_rhs{};       // static-only frame runs

  std::size_t size() const { return times.size(); }
  MetricField metric(std::size_t i) const { return MetricField(grid_states.at(i)); }
  FrameMetric frame_metric(std::size_t i) const {
    FrameMetric f = frame;
    f.coeffs = frame_states.at(i);
    return f;
  }
};

struct RunOptions {
  double t_end = 0.0;
  double dt = 0.0;  // 0: stable_dt(grid, order, safety)
  double safety = 1.0;
  int sample_every = 1;
  double curvature_cap = 10.0;  // stop once sup|Rm| exceeds this multiple of the start
  double lambda_min = 0.0;
  bool static_only = false;  // evaluate the right-hand side at t = 0 without stepping
};

inline double pointwise_sup_norm(const TensorField& t, const MetricField& g) {
  const TensorField n2 = pointwise_norm_squared(t, g);
  double m = 0.0;
  for (double v : n2.data()) m = std::max(m, v);
  return std::sqrt(m);
}

namespace detail {

inline void check_run_options(const RunOptions& o) {
  if (!(o.t_end >= 0.0) || !std::isfinite(o.t_end)) throw ConfigError("t_end must be finite and >= 0");
  if (!(o.dt >= 0.0) || !std::isfinite(o.dt)) throw ConfigError("dt must be finite and >= 0");
  if (o.sample_every < 1) throw ConfigError("sample_every must be >= 1");
  if (!(o.curvature_cap > 1.0)) throw ConfigError("curvature cap must exceed 1");
}

inline long step_count(double t_end, double dt) {
  if (t_end == 0.0) return 0;
  return static_cast<long>(std::ceil(t_end / dt - 1e-9));
}

inline void refuse_integration(const FlowSpec& spec) {
  if (spec.kind == FlowKind::family && spec.k >= 2)
    throw DomainError("obstruction flows with k >= 2 are evaluated statically only; time integration is refused");
}

struct GridEval {
  TensorField rhs;
  StepDiagnostics diag;
};

// `gated`: xcf right-hand sides require the definiteness margin.
inline GridEval grid_eval(const MetricField& g, const FlowSpec& spec, double lambda_min, double t,
                          bool gated = true) {
  const CurvatureBundle cb = curvature(g, CurvatureConvention::standard, false);
  GridEval e;
  e.diag.t = t;
  e.diag.min_eig = g.min_eigenvalue();
  // one |Rm|² field for both; integrate() sums in the same order as l2_norm_squared
  const TensorField rm2 = pointwise_norm_squared(cb.rm, g);
  e.diag.curvature_sup = std::sqrt(*std::max_element(rm2.data().begin(), rm2.data().end()));
  e.diag.functional = integrate(rm2, g);
  if (spec.kind == FlowKind::xcf) {
    const XcfAlgebra alg = xcf_algebra(g, cb);
    e.diag.lambda_margin = alg.lambda_margin(spec.sigma);
    if (gated) {
      e.rhs = xcf_rhs(alg, spec.sigma, lambda_min);
    } else {
      e.rhs = alg.x;
      e.rhs *= -2.0 * spec.sigma;
    }
  } else {
    e.rhs = flow_rhs(g, cb, spec);
  }
  e.diag.rhs_sup = pointwise_sup_norm(e.rhs, g);
  return e;
}

inline StepDiagnostics frame_diag(const FrameMetric& f, const FlowSpec& spec, double t) {
  const frame::Geometry geo = frame::geometry(f);
  const FrameCurvature fc = frame_curvature(f);
  StepDiagnostics d;
  d.t = t;
  d.min_eig = std::min({f.coeffs[0], f.coeffs[1], f.coeffs[2]});
  const double n2 = frame::norm_squared(geo.rm, geo);
  d.curvature_sup = std::sqrt(n2);
  d.functional = n2 * f.volume();
  d.min_sectional = std::min({fc.sectional[0], fc.sectional[1], fc.sectional[2]});
  d.scalar = fc.s;
  try {
    const FrameState rhs = frame_flow_rhs(f, spec, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < 3; ++i) d.rhs_sup += (rhs[i] / f.coeffs[i]) * (rhs[i] / f.coeffs[i]);
    d.rhs_sup = std::sqrt(d.rhs_sup);
  } catch (const NumericalError&) {
    d.rhs_sup = std::numeric_limits<double>::quiet_NaN();  // singular E
  }
  if (spec.kind == FlowKind::xcf) {
    d.lambda_margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) d.lambda_margin = std::min(d.lambda_margin, -spec.sigma * fc.e_orth[i]);
  }
  return d;
}

}  // namespace detail

// Advances `traj` (whose last stored state is at step `traj.steps.back()`)
// until `last_step`. Shared by fresh runs and restarts.
inline void continue_grid(Trajectory& traj, long last_step, const RunOptions& opt) {
  TensorField y = traj.grid_states.back();
  long step = traj.steps.back();
  const double dt = traj.dt;
  const FlowSpec spec = traj.spec;
  auto f = [&](const TensorField& s) {
    const MetricField m = checked_metric(s);
    return flow_rhs(m, curvature(m, CurvatureConvention::standard, false), spec, opt.lambda_min);
  };
  MetricField m = checked_metric(y);
  while (step < last_step) {
    detail::GridEval ev;
    try {
      ev = detail::grid_eval(m, spec, opt.lambda_min, step * dt);
    } catch (const DefinitenessViolated& e) {
      traj.aborted = e.what();
      return;
    }
    if (step == 0 && traj.diagnostics.empty()) traj.curvature_initial = ev.diag.curvature_sup;
    traj.diagnostics.push_back(ev.diag);
    if (traj.curvature_initial > 0.0 && ev.diag.curvature_sup > opt.curvature_cap * traj.curvature_initial) {
      traj.capped = true;
      return;
    }
    try {
      y = rk4_step(y, f, dt, ev.rhs);
    } catch (const DefinitenessViolated& e) {
      traj.aborted = e.what();
      return;
    }
    m = checked_metric(y);
    ++step;
    if (step % traj.sample_every == 0 || step == last_step) {
      traj.steps.push_back(step);
      traj.times.push_back(step * dt);
      traj.grid_states.push_back(y);
    }
  }
  // end state, so a completed run always carries its last diagnostics row
  if (step > 0 || traj.diagnostics.empty()) {
    const detail::GridEval ev = detail::grid_eval(m, spec, opt.lambda_min, step * dt, false);
    if (traj.diagnostics.empty()) traj.curvature_initial = ev.diag.curvature_sup;
    traj.diagnostics.push_back(ev.diag);
  }
}

inline void continue_frame(Trajectory& traj, long last_step, const RunOptions& opt) {
  FrameState y = traj.frame_states.back();
  long step = traj.steps.back();
  const double dt = traj.dt;
  const FlowSpec spec = traj.spec;
  auto metric_of = [&](const FrameState& s) {
    check_frame_state(s);
    FrameMetric f = traj.frame;
    f.coeffs = s;
    return f;
  };
  auto f = [&](const FrameState& s) { return frame_flow_rhs(metric_of(s), spec, opt.lambda_min); };
  while (step < last_step) {
    const StepDiagnostics d = detail::frame_diag(metric_of(y), spec, step * dt);
    if (step == 0 && traj.diagnostics.empty()) traj.curvature_initial = d.curvature_sup;
    traj.diagnostics.push_back(d);
    if (traj.curvature_initial > 0.0 && d.curvature_sup > opt.curvature_cap * traj.curvature_initial) {
      traj.capped = true;
      return;
    }
    try {
      y = rk4_step(y, f, dt);
    } catch (const DefinitenessViolated& e) {
      traj.aborted = e.what();
      return;
    }
    check_frame_state(y);
    ++step;
    if (step % traj.sample_every == 0 || step == last_step) {
      traj.steps.push_back(step);
      traj.times.push_back(step * dt);
      traj.frame_states.push_back(y);
    }
  }
  if (step > 0 || traj.diagnostics.empty()) {
    const StepDiagnostics d = detail::frame_diag(metric_of(y), spec, step * dt);
    if (traj.diagnostics.empty()) traj.curvature_initial = d.curvature_sup;
    traj.diagnostics.push_back(d);
  }
}

inline Trajectory run_flow(const MetricField& g0, const FlowSpec& spec, const RunOptions& opt) {
  detail::check_run_options(opt);
  spec.validate(g0.dim());
  Trajectory traj;
  traj.spec = spec;
  traj.backend = Backend::grid;
  traj.grid = g0.grid();
  traj.sample_every = opt.sample_every;
  traj.steps = {0};
  traj.times = {0.0};
  traj.grid_states = {g0.g()};
  if (spec.kind == FlowKind::xcf && !opt.static_only)
    throw DefinitenessViolated(0, 0.0,
                               "a flat-torus chart carries no metric with definite Einstein tensor "
                               "(topological obstruction); use the frame backend or static-only evaluation");
  if (opt.static_only) {
    const detail::GridEval ev = detail::grid_eval(g0, spec, opt.lambda_min, 0.0, false);
    traj.diagnostics.push_back(ev.diag);
    traj.curvature_initial = ev.diag.curvature_sup;
    traj.static_rhs = ev.rhs;
    return traj;
  }
  detail::refuse_integration(spec);
  if (opt.dt > 0.0) {
    traj.dt = opt.dt;
  } else {
    // largest dt below the stability bound that lands exactly on t_end
    traj.dt = stable_dt(g0.grid(), spec.operator_order(), opt.safety);
    if (opt.t_end > 0.0) traj.dt = opt.t_end / static_cast<double>(detail::step_count(opt.t_end, traj.dt));
  }
  continue_grid(traj, detail::step_count(opt.t_end, traj.dt), opt);
  return traj;
}

inline Trajectory run_flow(const FrameMetric& f0, const FlowSpec& spec, const RunOptions& opt) {
  detail::check_run_options(opt);
  spec.validate(3);
  f0.validate();
  if (!(opt.dt > 0.0)) throw ConfigError("the frame backend needs an explicit dt");
  Trajectory traj;
  traj.spec = spec;
  traj.backend = Backend::frame;
  traj.frame = f0;
  traj.sample_every = opt.sample_every;
  traj.steps = {0};
  traj.times = {0.0};
  traj.frame_states = {f0.coeffs};
  if (opt.static_only) {
    traj.diagnostics.push_back(detail::frame_diag(f0, spec, 0.0));
    traj.static_frame_rhs = frame_flow_rhs(f0, spec, opt.lambda_min);
    return traj;
  }
  detail::refuse_integration(spec);
  traj.dt = opt.dt;
  continue_frame(traj, detail::step_count(opt.t_end, traj.dt), opt);
  return traj;
}

// ---------------------------------------------------------------------------
// Diagnostics CSV (schema curveflow.diagnostics.v1) and frame samples CSV
// (schema curveflow.frame.v1).

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_diagnostics_csv(std::ostream& os, const Trajectory& traj) {
  os << "# schema curveflow.diagnostics.v1\n";
  os << "t,min_metric_eig,curvature_sup,functional,rhs_sup,lambda_margin,min_sectional\n";
  for (const StepDiagnostics& d : traj.diagnostics)
    os << fmt17(d.t) << ',' << fmt17(d.min_eig) << ',' << fmt17(d.curvature_sup) << ',' << fmt17(d.functional)
       << ',' << fmt17(d.rhs_sup) << ',' << fmt17(d.lambda_margin) << ',' << fmt17(d.min_sectional) << '\n';
}

inline void write_frame_csv(std::ostream& os, const Trajectory& traj) {
  os << "# schema curveflow.frame.v1\n";
  os << "t,a,b,c,S,E_margin\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const FrameMetric f = traj.frame_metric(i);
    const FrameCurvature fc = frame_curvature(f);
    double margin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j) margin = std::min(margin, -traj.spec.sigma * fc.e_orth[j]);
    os << fmt17(traj.times[i]) << ',' << fmt17(f.coeffs[0]) << ',' << fmt17(f.coeffs[1]) << ','
       << fmt17(f.coeffs[2]) << ',' << fmt17(fc.s) << ',' << fmt17(margin) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json plus one snapshot per stored sample (grid) or
// the coefficients inline (frame).

inline constexpr const char* kManifestSchema = "curveflow.run.v1";

inline nlohmann::json spec_json(const FlowSpec& s) {
  return {{"kind", to_string(s.kind)}, {"k", s.k},         {"alpha", s.alpha},
          {"beta", s.beta},            {"sigma", s.sigma}, {"preset", to_string(s.preset)}};
}

inline FlowSpec spec_from_json(const nlohmann::json& j) {
  FlowSpec s;
  const std::string kind = j.at("kind");
  if (kind == "ricci")
    s.kind = FlowKind::ricci;
  else if (kind == "l2")
    s.kind = FlowKind::l2;
  else if (kind == "family")
    s.kind = FlowKind::family;
  else if (kind == "xcf")
    s.kind = FlowKind::xcf;
  else
    throw ConfigError("unknown flow kind '" + kind + "'");
  s.k = j.at("k");
  s.alpha = j.at("alpha");
  s.beta = j.at("beta");
  s.sigma = j.at("sigma");
  s.preset = j.at("preset") == "l2_quadratics" ? LambdaPreset::l2_quadratics : LambdaPreset::zero;
  return s;
}

inline nlohmann::json grid_json(const ChartGrid& g) {
  std::vector<int> ext(g.extents.begin(), g.extents.begin() + g.dim);
  std::vector<double> len(g.lengths.begin(), g.lengths.begin() + g.dim);
  return {{"dim", g.dim}, {"extents", ext}, {"lengths", len}, {"fd_order", g.fd_order}};
}

inline ChartGrid grid_from_json(const nlohmann::json& j) {
  ChartGrid g;
  g.dim = j.at("dim");
  const std::vector<int> ext = j.at("extents");
  const std::vector<double> len = j.at("lengths");
  for (int i = 0; i < g.dim; ++i) {
    g.extents[i] = ext.at(i);
    g.lengths[i] = len.at(i);
  }
  g.fd_order = j.at("fd_order");
  g.validate();
  return g;
}

struct CheckpointInfo {
  std::uint64_t seed = 0;
  RunOptions options;
};

inline void write_checkpoint(const std::filesystem::path& dir, const Trajectory& traj, const CheckpointInfo& info) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json m;
  m["schema"] = kManifestSchema;
  m["spec"] = spec_json(traj.spec);
  m["backend"] = to_string(traj.backend);
  m["dt"] = traj.dt;
  m["seed"] = info.seed;
  m["sample_every"] = traj.sample_every;
  m["t_end"] = info.options.t_end;
  m["curvature_cap"] = info.options.curvature_cap;
  m["lambda_min"] = info.options.lambda_min;
  m["curvature_initial"] = traj.curvature_initial;
  m["capped"] = traj.capped;
  if (traj.aborted) m["aborted"] = *traj.aborted;
  nlohmann::json samples = nlohmann::json::array();
  if (traj.backend == Backend::grid) {
    m["grid"] = grid_json(traj.grid);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      char name[40];
      std::snprintf(name, sizeof name, "snap_%08ld.cfld", traj.steps[i]);
      save_snapshot((dir / name).string(), traj.grid_states[i]);
      samples.push_back({{"step", traj.steps[i]}, {"t", traj.times[i]}, {"file", name}});
    }
  } else {
    m["frame"] = {{"structure", traj.frame.structure}, {"volume_norm", traj.frame.volume_norm}};
    for (std::size_t i = 0; i < traj.size(); ++i)
      samples.push_back({{"step", traj.steps[i]}, {"t", traj.times[i]}, {"coeffs", traj.frame_states[i]}});
  }
  m["samples"] = samples;
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << '\n';
  if (!os) throw Error("could not write manifest in " + dir.string());
}

// Loads a checkpoint. Grid snapshots are read for every stored sample.
inline Trajectory read_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ConfigError("no manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    is >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  if (m.at("schema") != kManifestSchema) throw ConfigError("unsupported manifest schema");
  Trajectory traj;
  traj.spec = spec_from_json(m.at("spec"));
  traj.backend = m.at("backend") == "grid" ? Backend::grid : Backend::frame;
  traj.dt = m.at("dt");
  traj.sample_every = m.at("sample_every");
  traj.curvature_initial = m.at("curvature_initial");
  traj.capped = m.at("capped");
  if (m.contains("aborted")) traj.aborted = m.at("aborted").get<std::string>();
  if (info != nullptr) {
    info->seed = m.at("seed");
    info->options.t_end = m.at("t_end");
    info->options.dt = traj.dt;
    info->options.sample_every = traj.sample_every;
    info->options.curvature_cap = m.at("curvature_cap");
    info->options.lambda_min = m.at("lambda_min");
  }
  if (traj.backend == Backend::grid) {
    traj.grid = grid_from_json(m.at("grid"));
    for (const auto& s : m.at("samples")) {
      traj.steps.push_back(s.at("step"));
      traj.times.push_back(s.at("t"));
      traj.grid_states.push_back(load_snapshot((dir / s.at("file").get<std::string>()).string(), traj.grid));
    }
  } else {
    traj.frame.structure = m.at("frame").at("structure");
    traj.frame.volume_norm = m.at("frame").at("volume_norm");
    for (const auto& s : m.at("samples")) {
      traj.steps.push_back(s.at("step"));
      traj.times.push_back(s.at("t"));
      traj.frame_states.push_back(s.at("coeffs"));
    }
    traj.frame.coeffs = traj.frame_states.front();
  }
  if (traj.times.empty()) throw ConfigError("checkpoint has no samples");
  return traj;
}

// Continues a checkpointed trajectory to t_end on the original schedule.
// Diagnostics restart at the resumed step.
inline Trajectory resume_flow(const std::filesystem::path& dir, double t_end) {
  CheckpointInfo info;
  Trajectory traj = read_checkpoint(dir, &info);
  if (traj.aborted || traj.capped) throw DomainError("checkpointed run ended early; nothing to resume");
  info.options.t_end = t_end;
  const long last = detail::step_count(t_end, traj.dt);
  if (traj.backend == Backend::grid)
    continue_grid(traj, last, info.options);
  else
    continue_frame(traj, last, info.options);
  return traj;
}

// ---------------------------------------------------------------------------
// Pair audits

struct PairAudit {
  EnergySeries series;
  AuditResult result;
  Weights weights;
};

inline void require_matching_legs(const Trajectory& a, const Trajectory& b) {
  if (a.backend != b.backend) throw DomainError("audit legs use different backends");
  if (a.backend == Backend::grid && !(a.grid == b.grid)) throw GridMismatch();
  if (a.size() != b.size()) throw DomainError("audit legs have different sample counts");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a.times[i] - b.times[i]) > 1e-12 * std::max(1.0, std::abs(a.times[i])))
      throw DomainError("audit legs are sampled at different times");
}

inline PairAudit audit_pair(const Trajectory& a, const Trajectory& b, const AuditOptions& opt = {}) {
  require_matching_legs(a, b);
  if (!(a.spec == b.spec)) throw DomainError("audit legs run different flows");
  PairAudit out;
  if (a.backend == Backend::frame) {
    if (a.spec.kind != FlowKind::xcf) throw DomainError("frame audits are defined for cross-curvature flow only");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const FrameXcfPack p = frame_xcf_pack(a.frame_metric(i), b.frame_metric(i));
      out.series.push(a.times[i], p.norm_h + p.norm_a, p.norm_w, 0.0);
    }
  } else if (a.spec.kind == FlowKind::xcf) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const XcfPack p = xcf_pack(a.metric(i), b.metric(i));
      out.series.push(a.times[i], l2_norm_squared(p.h, p.reference) + l2_norm_squared(p.a, p.reference),
                      l2_norm_squared(p.w, p.reference), 0.0);
    }
  } else {
    out.weights = choose_weights(a.spec.energy_alpha(), a.grid.dim);
    out.series.r = out.weights.r;
    out.series.eps = out.weights.eps;
    const int k = a.spec.energy_k();
    for (std::size_t i = 0; i < a.size(); ++i)
      out.series.push(a.times[i], energies(build_differences(a.metric(i), b.metric(i), k), out.weights.r));
  }
  out.result = gronwall_audit(out.series, opt);
  out.series.c_fit = out.result.c_fit;
  out.series.max_violation = out.result.max_violation;
  return out;
}

// Subsamples a fine leg onto the sample times of a coarse leg.
inline Trajectory resample_to(const Trajectory& fine, const Trajectory& coarse) {
  Trajectory out = fine;
  out.steps.clear();
  out.times.clear();
  out.grid_states.clear();
  out.frame_states.clear();
  std::size_t j = 0;
  for (double t : coarse.times) {
    while (j < fine.size() && fine.times[j] < t - 1e-12 * std::max(1.0, t)) ++j;
    if (j == fine.size() || std::abs(fine.times[j] - t) > 1e-12 * std::max(1.0, t))
      throw DomainError("fine leg has no sample at t = " + fmt17(t));
    out.steps.push_back(fine.steps[j]);
    out.times.push_back(fine.times[j]);
    if (fine.backend == Backend::grid)
      out.grid_states.push_back(fine.grid_states[j]);
    else
      out.frame_states.push_back(fine.frame_states[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evolution identities: centered time difference at each interior sample
// against its evolution equation evaluated at the middle sample.

enum class EvolutionIdentity { xconnev, xvev, christoffel_ev, einstein_ev };

inline const char* to_string(EvolutionIdentity w) {
  switch (w) {
    case EvolutionIdentity::xconnev: return "xconnev";
    case EvolutionIdentity::xvev: return "xvev";
    case EvolutionIdentity::christoffel_ev: return "christoffel_ev";
    case EvolutionIdentity::einstein_ev: return "einstein_ev";
  }
  return "?";
}

struct IdentityDefect {
  EvolutionIdentity which{};
  double defect = 0.0;  // max-abs over interior samples
  double scale = 0.0;   // max-abs of the time derivative itself
  std::size_t samples = 0;
};

namespace detail {

// ½ g^{km}(∇_i ġ_jm + ∇_j ġ_im − ∇_m ġ_ij) from ∇ġ stored [j][m][i].
template <class G>
double connection_variation(const G& gi, const std::vector<double>& dgdot, int d, int k, int i, int j) {
  double acc = 0.0;
  for (int m = 0; m < d; ++m)
    acc += gi(k, m) * (dgdot[(j * d + m) * d + i] + dgdot[(i * d + m) * d + j] - dgdot[(i * d + j) * d + m]);
  return 0.5 * acc;
}

struct FrameSample {
  frame::Geometry geo;
  XcfPoint pt;
};

inline FrameSample frame_sample(const FrameMetric& f) {
  FrameSample s{frame::geometry(f), {}};
  s.pt = frame::xcf(s.geo);
  return s;
}

inline SmallMatrix gi_matrix(const frame::Geometry& geo) {
  SmallMatrix m(3, 3);
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = geo.gi[i];
  return m;
}

// Right-hand sides on the frame, σ-general. The lower-order terms of the V
// and E^{ij} equations are 4Pg^{kl}V_ikV_jl and 4Pg^{ij}; `alt_lower_order` swaps in
// Pg^{kl}(V_ikV_jl + V_ijV_kl) and Pg^{ij} + tr_g(X)E^{ij}, which agree only
// at Einstein metrics.
inline std::vector<double> frame_identity_rhs(const FrameSample& s, int sigma, EvolutionIdentity which,
                                              bool alt_lower_order = false) {
  const frame::Geometry& geo = s.geo;
  const XcfPoint& pt = s.pt;
  const SmallMatrix gi = gi_matrix(geo);
  const double sg = sigma;
  auto box = [&](const frame::Tensor& t) {
    // −σ E^{ab} ∇_a ∇_b T, derivative slots appended as [..][b][a]
    const frame::Tensor dd = frame::covariant_derivative(t, geo, 2);
    frame::Tensor out(t.order);
    for (std::size_t c = 0; c < out.c.size(); ++c)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) out.c[c] += -sg * pt.e_raised(a, b) * dd.c[(c * 3 + b) * 3 + a];
    return out;
  };
  switch (which) {
    case EvolutionIdentity::xconnev:
    case EvolutionIdentity::christoffel_ev: {
      // ġ = −2σPV for xconnev; the general form takes ġ from the flow.
      frame::Tensor gdot = frame::from_matrix(pt.x);
      gdot *= -2.0 * sg;
      const frame::Tensor dg = frame::covariant_derivative(gdot, geo);
      std::vector<double> out(27);
      for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) out[(k * 3 + i) * 3 + j] = connection_variation(gi, dg.c, 3, k, i, j);
      return out;
    }
    case EvolutionIdentity::xvev: {
      const frame::Tensor v = frame::from_matrix(pt.v);
      const frame::Tensor dv = frame::covariant_derivative(v, geo);  // [a][i][k] = ∇_k V_ai
      const frame::Tensor bv = box(v);
      const SmallMatrix& e = pt.e_raised;
      std::vector<double> out(9);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double quad = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l)
                  quad += (e(a, l) * e(k, b) - 2.0 * e(a, b) * e(k, l)) * dv.c[(a * 3 + i) * 3 + k] *
                          dv.c[(b * 3 + j) * 3 + l];
          double lin = 0.0;
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l)
              lin += alt_lower_order ? gi(k, l) * (pt.v(i, k) * pt.v(j, l) + pt.v(i, j) * pt.v(k, l))
                            : 4.0 * gi(k, l) * pt.v(i, k) * pt.v(j, l);
          out[i * 3 + j] = bv.c[i * 3 + j] - sg * (quad + pt.p * lin);
        }
      return out;
    }
    case EvolutionIdentity::einstein_ev: {
      // work with E_ab and raise at the end: ∇ commutes with g^{-1}
      const frame::Tensor el = frame::from_matrix(pt.e);
      const frame::Tensor de = frame::covariant_derivative(el, geo);  // [a][b][k] = ∇_k E_ab
      const frame::Tensor be = box(el);
      double tr_x = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) tr_x += gi(a, b) * pt.x(a, b);
      std::vector<double> out(9);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double b_up = 0.0, quad = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) b_up += gi(i, a) * gi(j, b) * be.c[a * 3 + b];
          // ∇_k E^{jl} ∇_l E^{ik}
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) {
              double djl = 0.0, dik = 0.0;
              for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                  djl += gi(j, a) * gi(l, b) * de.c[(a * 3 + b) * 3 + k];
                  dik += gi(i, a) * gi(k, b) * de.c[(a * 3 + b) * 3 + l];
                }
              quad += djl * dik;
            }
          const double lower = alt_lower_order ? pt.p * gi(i, j) + tr_x * pt.e_raised(i, j) : 4.0 * pt.p * gi(i, j);
          out[i * 3 + j] = b_up + sg * (quad + lower);
        }
      return out;
    }
  }
  return {};
}

inline std::vector<double> frame_identity_value(const FrameSample& s, EvolutionIdentity which) {
  switch (which) {
    case EvolutionIdentity::xconnev:
    case EvolutionIdentity::christoffel_ev: return {s.geo.gamma.begin(), s.geo.gamma.end()};
    case EvolutionIdentity::xvev: return {s.pt.v.data(), s.pt.v.data() + 9};
    case EvolutionIdentity::einstein_ev: return {s.pt.e_raised.data(), s.pt.e_raised.data() + 9};
  }
  return {};
}

}  // namespace detail

inline IdentityDefect evolution_identity_check(const Trajectory& traj, EvolutionIdentity which, bool alt_lower_order = false) {
  if (traj.size() < 3) throw DomainError("evolution identity check needs at least 3 samples");
  IdentityDefect out;
  out.which = which;
  if (traj.backend == Backend::frame) {
    if (traj.spec.kind != FlowKind::xcf)
      throw DomainError("frame evolution identities are defined on cross-curvature runs");
    std::vector<detail::FrameSample> s;
    for (std::size_t i = 0; i < traj.size(); ++i) s.push_back(detail::frame_sample(traj.frame_metric(i)));
    for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
      const double h = traj.times[i + 1] - traj.times[i - 1];
      const auto vp = detail::frame_identity_value(s[i + 1], which), vm = detail::frame_identity_value(s[i - 1], which);
      const auto rhs = detail::frame_identity_rhs(s[i], traj.spec.sigma, which, alt_lower_order);
      for (std::size_t c = 0; c < rhs.size(); ++c) {
        const double dt = (vp[c] - vm[c]) / h;
        out.defect = std::max(out.defect, std::abs(dt - rhs[c]));
        out.scale = std::max(out.scale, std::abs(dt));
      }
      ++out.samples;
    }
    return out;
  }
  if (which != EvolutionIdentity::christoffel_ev)
    throw DomainError(std::string(to_string(which)) + " needs a cross-curvature trajectory on the frame backend");
  const int d = traj.grid.dim;
  for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
    const double h = traj.times[i + 1] - traj.times[i - 1];
    const MetricField gm = traj.metric(i);
    const Connection cp = christoffel(traj.metric(i + 1)), cm = christoffel(traj.metric(i - 1));
    const CurvatureBundle cb = curvature(gm);
    const TensorField gdot = flow_rhs(gm, cb, traj.spec);
    const TensorField dg = covariant_derivative(gdot, cb.conn);
    std::vector<double> blk(d * d * d);
    for (std::size_t n = 0; n < gm.grid().nodes(); ++n) {
      const SmallMatrix gi = gm.inverse_at(n);
      const auto dn = dg.node(n);
      blk.assign(dn.begin(), dn.end());
      for (int k = 0; k < d; ++k)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) {
            const std::size_t c = (k * d + a) * d + b;
            const double rate = (cp.gamma.at(n, c) - cm.gamma.at(n, c)) / h;
            out.defect = std::max(out.defect, std::abs(rate - detail::connection_variation(gi, blk, d, k, a, b)));
            out.scale = std::max(out.scale, std::abs(rate));
          }
    }
    ++out.samples;
  }
  return out;
}

// log2 of the defect ratio between a run and its dt/2 refinement.
inline double identity_order(const Trajectory& coarse, const Trajectory& fine, EvolutionIdentity which) {
  return std::log2(evolution_identity_check(coarse, which).defect / evolution_identity_check(fine, which).defect);
}

}  // namespace curveflow
