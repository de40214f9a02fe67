#pragma once

// Run configuration: flat INI files, one per leg.
//
//   [flow]      kind = ricci | l2 | family | xcf, k, alpha, beta, sigma, preset
//   [geometry]  backend = grid | frame, dim, n (or comma list), length (or
//               comma list), fd_order, structure = su2 | nil | sol
//   [initial]   recipe = flat | conformal | berger | snapshot, plus exactly
//               the keys of that recipe: scale | amplitude, modes | coeffs | path
//   [time]      t_end, dt = auto | value, safety, sample_every, lambda_min,
//               curvature_cap, static_only
//   [perturb]   amplitude, mode, seed       (second leg of a pair)
//   [audit]     floor, identical, tolerance (shared by both legs)
//   [output]    dir

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "curveflow/fields.hpp"
#include "curveflow/runtime.hpp"
#include "curveflow/snapshot.hpp"

namespace curveflow {

enum class InitialRecipe { flat, conformal, berger, snapshot };

inline const char* to_string(InitialRecipe r) {
  switch (r) {
    case InitialRecipe::flat: return "flat";
    case InitialRecipe::conformal: return "conformal";
    case InitialRecipe::berger: return "berger";
    case InitialRecipe::snapshot: return "snapshot";
  }
  return "?";
}

struct Perturbation {
  double amplitude = 0.0;
  int mode = 1;
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::string source;
  FlowSpec spec;
  Backend backend = Backend::grid;
  ChartGrid grid;
  std::string structure = "su2";
  InitialRecipe recipe = InitialRecipe::flat;
  double scale = 1.0;
  double amplitude = 0.1;
  std::vector<int> modes{1};
  std::array<double, 3> coeffs{1.0, 1.0, 1.0};
  std::filesystem::path snapshot;
  RunOptions options;
  std::optional<Perturbation> perturb;
  std::optional<AuditOptions> audit;
  std::filesystem::path out = "out";
};

namespace detail {

class IniReader {
 public:
  IniReader(const boost::property_tree::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
    throw ConfigError(source_ + ": [" + section + "] " + key + ": " + msg);
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = tree_.get_child_optional(section);
    return s && s->find(key) != s->not_found();
  }

  std::string text(const std::string& section, const std::string& key) const {
    const auto s = tree_.get_child_optional(section);
    if (!s || s->find(key) == s->not_found()) fail(section, key, "missing");
    return trim(s->get<std::string>(key));
  }

  std::string text(const std::string& section, const std::string& key, const std::string& fallback) const {
    return has(section, key) ? text(section, key) : fallback;
  }

  double real(const std::string& section, const std::string& key) const {
    return parse_real(section, key, text(section, key));
  }
  double real(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? real(section, key) : fallback;
  }

  long integer(const std::string& section, const std::string& key) const {
    return parse_integer(section, key, text(section, key));
  }
  long integer(const std::string& section, const std::string& key, long fallback) const {
    return has(section, key) ? integer(section, key) : fallback;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = text(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(section, key, "expected true or false, got '" + v + "'");
  }

  std::vector<double> reals(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : split(text(section, key))) out.push_back(parse_real(section, key, item));
    return out;
  }
  std::vector<long> integers(const std::string& section, const std::string& key) const {
    std::vector<long> out;
    for (const std::string& item : split(text(section, key))) out.push_back(parse_integer(section, key, item));
    return out;
  }

  // Rejects sections and keys outside `allowed`.
  void restrict(const std::map<std::string, std::set<std::string>>& allowed) const {
    for (const auto& [section, body] : tree_) {
      const auto it = allowed.find(section);
      if (it == allowed.end()) throw ConfigError(source_ + ": unknown section [" + section + "]");
      if (!body.data().empty()) throw ConfigError(source_ + ": '" + section + "' is a key outside any section");
      for (const auto& [key, value] : body)
        if (!it->second.count(key)) fail(section, key, "unknown key");
    }
  }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
  }
  double parse_real(const std::string& section, const std::string& key, const std::string& v) const {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      fail(section, key, "expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail(section, key, "expected a number, got '" + v + "'");
    if (!std::isfinite(x)) fail(section, key, "must be finite");
    return x;
  }
  long parse_integer(const std::string& section, const std::string& key, const std::string& v) const {
    std::size_t used = 0;
    long x = 0;
    try {
      x = std::stol(v, &used);
    } catch (const std::exception&) {
      fail(section, key, "expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail(section, key, "expected an integer, got '" + v + "'");
    return x;
  }

  const boost::property_tree::ptree& tree_;
  std::string source_;
};

inline const std::map<InitialRecipe, std::set<std::string>>& recipe_keys() {
  static const std::map<InitialRecipe, std::set<std::string>> keys{
      {InitialRecipe::flat, {"scale"}},
      {InitialRecipe::conformal, {"amplitude", "modes"}},
      {InitialRecipe::berger, {"coeffs"}},
      {InitialRecipe::snapshot, {"path"}},
  };
  return keys;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  const detail::IniReader ini(tree, source);
  ini.restrict({
      {"flow", {"kind", "k", "alpha", "beta", "sigma", "preset"}},
      {"geometry", {"backend", "dim", "n", "length", "fd_order", "structure"}},
      {"initial", {"recipe", "scale", "amplitude", "modes", "coeffs", "path"}},
      {"time", {"t_end", "dt", "safety", "sample_every", "lambda_min", "curvature_cap", "static_only"}},
      {"perturb", {"amplitude", "mode", "seed"}},
      {"audit", {"floor", "identical", "tolerance"}},
      {"output", {"dir"}},
  });

  RunConfig c;
  c.source = source;

  const std::string kind = ini.text("flow", "kind");
  if (kind == "ricci") {
    c.spec = FlowSpec::ricci();
  } else if (kind == "l2") {
    c.spec = FlowSpec::l2();
  } else if (kind == "family") {
    const std::string preset = ini.text("flow", "preset", "zero");
    if (preset != "zero" && preset != "l2_quadratics") ini.fail("flow", "preset", "expected zero or l2_quadratics");
    c.spec = FlowSpec::family(static_cast<int>(ini.integer("flow", "k")), ini.real("flow", "alpha", 0.0),
                              ini.real("flow", "beta", 0.0),
                              preset == "zero" ? LambdaPreset::zero : LambdaPreset::l2_quadratics);
  } else if (kind == "xcf") {
    const long sigma = ini.integer("flow", "sigma", 1);
    if (sigma != 1 && sigma != -1) ini.fail("flow", "sigma", "must be 1 or -1");
    c.spec = FlowSpec::xcf(static_cast<int>(sigma));
  } else {
    ini.fail("flow", "kind", "expected ricci, l2, family or xcf, got '" + kind + "'");
  }
  for (const char* key : {"k", "alpha", "beta", "preset"})
    if (c.spec.kind != FlowKind::family && ini.has("flow", key)) ini.fail("flow", key, "only meaningful for kind = family");
  if (c.spec.kind != FlowKind::xcf && ini.has("flow", "sigma")) ini.fail("flow", "sigma", "only meaningful for kind = xcf");

  const std::string backend = ini.text("geometry", "backend", "grid");
  if (backend == "grid") {
    c.backend = Backend::grid;
  } else if (backend == "frame") {
    c.backend = Backend::frame;
  } else {
    ini.fail("geometry", "backend", "expected grid or frame");
  }

  if (c.backend == Backend::grid) {
    const long dim = ini.integer("geometry", "dim");
    if (dim < 2 || dim > kMaxDim) ini.fail("geometry", "dim", "must be 2, 3 or 4");
    c.grid.dim = static_cast<int>(dim);
    const std::vector<long> n = ini.integers("geometry", "n");
    if (n.size() != 1 && n.size() != static_cast<std::size_t>(dim))
      ini.fail("geometry", "n", "give one extent or one per axis");
    const std::vector<double> len =
        ini.has("geometry", "length") ? ini.reals("geometry", "length") : std::vector<double>{2.0 * std::numbers::pi};
    if (len.size() != 1 && len.size() != static_cast<std::size_t>(dim))
      ini.fail("geometry", "length", "give one length or one per axis");
    for (int i = 0; i < dim; ++i) {
      const long ni = n.size() == 1 ? n[0] : n[i];
      if (ni < 8) ini.fail("geometry", "n", "every extent must be >= 8");
      c.grid.extents[i] = static_cast<int>(ni);
      c.grid.lengths[i] = len.size() == 1 ? len[0] : len[i];
      if (!(c.grid.lengths[i] > 0.0)) ini.fail("geometry", "length", "must be > 0");
    }
    const long fd = ini.integer("geometry", "fd_order", 4);
    if (fd != 2 && fd != 4) ini.fail("geometry", "fd_order", "must be 2 or 4");
    c.grid.fd_order = static_cast<int>(fd);
    if (ini.has("geometry", "structure")) ini.fail("geometry", "structure", "only meaningful for backend = frame");
  } else {
    for (const char* key : {"dim", "n", "length", "fd_order"})
      if (ini.has("geometry", key)) ini.fail("geometry", key, "not meaningful for backend = frame");
    c.structure = ini.text("geometry", "structure", "su2");
    if (c.structure != "su2" && c.structure != "nil" && c.structure != "sol")
      ini.fail("geometry", "structure", "expected su2, nil or sol");
  }
  try {
    c.spec.validate(c.backend == Backend::frame ? 3 : c.grid.dim);
  } catch (const DomainError& e) {
    ini.fail("flow", "kind", e.what());
  }

  const std::string recipe = ini.text("initial", "recipe");
  bool found = false;
  for (const auto& [r, keys] : detail::recipe_keys())
    if (recipe == to_string(r)) {
      c.recipe = r;
      found = true;
    }
  if (!found) ini.fail("initial", "recipe", "expected flat, conformal, berger or snapshot");
  for (const auto& [r, keys] : detail::recipe_keys())
    if (r != c.recipe)
      for (const std::string& key : keys)
        if (ini.has("initial", key))
          ini.fail("initial", key, std::string("belongs to recipe ") + to_string(r) +
                                       "; exactly one initial-condition recipe is allowed");
  if ((c.recipe == InitialRecipe::berger) != (c.backend == Backend::frame))
    ini.fail("initial", "recipe", "berger pairs with backend = frame; the other recipes need backend = grid");
  switch (c.recipe) {
    case InitialRecipe::flat:
      c.scale = ini.real("initial", "scale", 1.0);
      if (!(c.scale > 0.0)) ini.fail("initial", "scale", "must be > 0");
      break;
    case InitialRecipe::conformal: {
      c.amplitude = ini.real("initial", "amplitude");
      if (!(std::abs(c.amplitude) <= 1.0)) ini.fail("initial", "amplitude", "must lie in [-1, 1]");
      c.modes.clear();
      for (long m : ini.integers("initial", "modes")) {
        if (m < 1 || m > c.grid.extents[0] / 4) ini.fail("initial", "modes", "each mode must lie in [1, n/4]");
        c.modes.push_back(static_cast<int>(m));
      }
      break;
    }
    case InitialRecipe::berger: {
      const std::vector<double> v = ini.reals("initial", "coeffs");
      if (v.size() != 3) ini.fail("initial", "coeffs", "expected three values a, b, c");
      for (int i = 0; i < 3; ++i) {
        if (!(v[i] > 0.0)) ini.fail("initial", "coeffs", "must be > 0");
        c.coeffs[i] = v[i];
      }
      break;
    }
    case InitialRecipe::snapshot:
      c.snapshot = ini.text("initial", "path");
      if (c.snapshot.is_relative()) c.snapshot = std::filesystem::path(source).parent_path() / c.snapshot;
      break;
  }

  c.options.t_end = ini.real("time", "t_end");
  if (!(c.options.t_end > 0.0)) ini.fail("time", "t_end", "must be > 0");
  const std::string dt = ini.text("time", "dt", "auto");
  if (dt != "auto") {
    c.options.dt = ini.real("time", "dt");
    if (!(c.options.dt > 0.0)) ini.fail("time", "dt", "must be > 0 or auto");
  } else if (c.backend == Backend::frame) {
    ini.fail("time", "dt", "frame runs need an explicit step");
  }
  c.options.safety = ini.real("time", "safety", c.options.safety);
  if (!(c.options.safety > 0.0 && c.options.safety <= 1.0)) ini.fail("time", "safety", "must lie in (0, 1]");
  const long every = ini.integer("time", "sample_every", 1);
  if (every < 1) ini.fail("time", "sample_every", "must be >= 1");
  c.options.sample_every = static_cast<int>(every);
  c.options.lambda_min = ini.real("time", "lambda_min", 0.0);
  c.options.curvature_cap = ini.real("time", "curvature_cap", c.options.curvature_cap);
  if (!(c.options.curvature_cap > 1.0)) ini.fail("time", "curvature_cap", "must be > 1");
  c.options.static_only = ini.boolean("time", "static_only", false);

  if (ini.has("perturb", "amplitude") || ini.has("perturb", "mode") || ini.has("perturb", "seed")) {
    Perturbation p;
    p.amplitude = ini.real("perturb", "amplitude");
    if (!(std::abs(p.amplitude) < 0.5)) ini.fail("perturb", "amplitude", "must satisfy |amplitude| < 0.5");
    p.mode = static_cast<int>(ini.integer("perturb", "mode", c.backend == Backend::frame ? 0 : 1));
    if (c.backend == Backend::frame ? (p.mode < 0 || p.mode > 3) : (p.mode < 1 || p.mode > c.grid.extents[0] / 4))
      ini.fail("perturb", "mode", c.backend == Backend::frame ? "must be 0 (random) or a coefficient 1..3"
                                                              : "must lie in [1, n/4]");
    const long seed = ini.integer("perturb", "seed", 0);
    if (seed < 0) ini.fail("perturb", "seed", "must be >= 0");
    p.seed = static_cast<std::uint64_t>(seed);
    c.perturb = p;
  }

  if (tree.get_child_optional("audit")) {
    AuditOptions a;
    a.floor = ini.real("audit", "floor", 0.0);
    if (a.floor < 0.0) ini.fail("audit", "floor", "must be >= 0");
    a.identical = ini.boolean("audit", "identical", false);
    a.tolerance = ini.real("audit", "tolerance", a.tolerance);
    if (!(a.tolerance >= 0.0)) ini.fail("audit", "tolerance", "must be >= 0");
    c.audit = a;
  }

  c.out = ini.text("output", "dir", "out");
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  return parse_config(is, path.string());
}

inline FrameMetric frame_structure(const std::string& name, const std::array<double, 3>& coeffs) {
  if (name == "su2") return FrameMetric::su2(coeffs[0], coeffs[1], coeffs[2]);
  if (name == "nil") return FrameMetric::nil(coeffs[0], coeffs[1], coeffs[2]);
  if (name == "sol") return FrameMetric::sol(coeffs[0], coeffs[1], coeffs[2]);
  throw ConfigError("unknown frame structure '" + name + "'");
}

// Perturbed second leg. Grid: g̃ = e^{2δψ}g with ψ a unit-amplitude random
// Fourier sum of the given maximal mode. Frame: one coefficient scaled by
// (1 + δ), or all three along a seeded random unit direction (mode 0).
inline MetricField apply_perturbation(const MetricField& g, const Perturbation& p) {
  std::mt19937_64 rng(p.seed);
  const FourierScalar psi = FourierScalar::random(g.dim(), 3, p.mode, 1.0, rng);
  TensorField out = g.g();
  for (std::size_t n = 0; n < out.nodes(); ++n) {
    const double f = std::exp(2.0 * p.amplitude * psi(g.grid(), g.grid().position(n)));
    for (double& v : out.node(n)) v *= f;
  }
  return MetricField(std::move(out));
}

inline FrameMetric apply_perturbation(FrameMetric f, const Perturbation& p) {
  if (p.mode > 0) {
    f.coeffs[p.mode - 1] *= 1.0 + p.amplitude;
    return f;
  }
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal;
  std::array<double, 3> w{};
  double norm = 0.0;
  for (double& v : w) {
    v = normal(rng);
    norm += v * v;
  }
  for (int i = 0; i < 3; ++i) f.coeffs[i] *= 1.0 + p.amplitude * w[i] / std::sqrt(norm);
  return f;
}

inline MetricField initial_metric(const RunConfig& c) {
  if (c.backend != Backend::grid) throw ConfigError(c.source + ": initial_metric needs backend = grid");
  MetricField g = [&] {
    switch (c.recipe) {
      case InitialRecipe::flat: return MetricField::flat(c.grid, c.scale);
      case InitialRecipe::conformal: return conformal_metric(c.grid, FourierScalar::modes(c.grid.dim, c.modes, c.amplitude));
      case InitialRecipe::snapshot: {
        MetricField m(load_snapshot(c.snapshot.string(), c.grid));
        return m;
      }
      case InitialRecipe::berger: break;
    }
    throw ConfigError(c.source + ": [initial] recipe: berger needs backend = frame");
  }();
  return c.perturb ? apply_perturbation(g, *c.perturb) : g;
}

inline FrameMetric initial_frame(const RunConfig& c) {
  if (c.backend != Backend::frame) throw ConfigError(c.source + ": initial_frame needs backend = frame");
  const FrameMetric f = frame_structure(c.structure, c.coeffs);
  return c.perturb ? apply_perturbation(f, *c.perturb) : f;
}

inline Trajectory run_config(const RunConfig& c) {
  return c.backend == Backend::grid ? run_flow(initial_metric(c), c.spec, c.options)
                                    : run_flow(initial_frame(c), c.spec, c.options);
}

// Pair audits: both legs must agree on everything except the perturbation
// and the step; the audit block may appear in either file but not disagree.
inline AuditOptions pair_audit_options(const RunConfig& a, const RunConfig& b) {
  if (!(a.spec == b.spec)) throw ConfigError("pair legs use different flows");
  if (a.backend != b.backend) throw ConfigError("pair legs use different backends");
  if (a.backend == Backend::grid && !(a.grid == b.grid)) throw ConfigError("pair legs use different grids");
  if (a.backend == Backend::frame && a.structure != b.structure)
    throw ConfigError("pair legs use different frame structures");
  if (a.options.t_end != b.options.t_end) throw ConfigError("pair legs use different t_end");
  if (a.audit && b.audit &&
      (a.audit->floor != b.audit->floor || a.audit->identical != b.audit->identical ||
       a.audit->tolerance != b.audit->tolerance))
    throw ConfigError("the two legs carry different [audit] blocks");
  return a.audit ? *a.audit : (b.audit ? *b.audit : AuditOptions{});
}

}  // namespace curveflow
