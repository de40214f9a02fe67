// curveflow: run flows, audit pairs of runs, and run the identity suite.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curveflow/config.hpp"
#include "curveflow/identities.hpp"
#include "curveflow/report.hpp"
#include "curveflow/runtime.hpp"

namespace fs = std::filesystem;
using namespace curveflow;

namespace {

constexpr const char* kVersion = "0.1.0";

int threads_from_env() {
  const char* v = std::getenv("CURVEFLOW_THREADS");
  const int fallback = 1;
  if (v == nullptr || *v == '\0') return fallback;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096) throw ConfigError(std::string("CURVEFLOW_THREADS: expected a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw Error("could not write " + path.string());
}

template <class F>
void write_stream(const fs::path& path, F&& body) {
  std::ofstream os(path);
  body(os);
  if (!os) throw Error("could not write " + path.string());
}

void apply_seed(RunConfig& c, std::optional<std::uint64_t> seed) {
  if (seed && c.perturb) c.perturb->seed = *seed;
}

std::uint64_t seed_of(const RunConfig& c) { return c.perturb ? c.perturb->seed : 0; }

// Checkpoint, diagnostics and (frame) coefficient samples for one trajectory.
void write_run(const fs::path& dir, const Trajectory& traj, const CheckpointInfo& info) {
  write_checkpoint(dir, traj, info);
  write_stream(dir / "diagnostics.csv", [&](std::ostream& os) { write_diagnostics_csv(os, traj); });
  if (traj.backend == Backend::frame)
    write_stream(dir / "frame.csv", [&](std::ostream& os) { write_frame_csv(os, traj); });
  else if (info.options.static_only)
    save_snapshot((dir / "rhs.cfld").string(), traj.static_rhs);
}

// 0 for a completed run, 3 when the run stopped on a definiteness loss.
int report_run(const std::string& label, const Trajectory& traj) {
  if (traj.aborted) {
    std::cerr << label << ": aborted at t = " << fmt17(traj.times.back()) << ": " << *traj.aborted << '\n';
    return static_cast<int>(ExitCode::numerical_abort);
  }
  if (traj.capped)
    std::cerr << label << ": stopped at t = " << fmt17(traj.times.back())
              << ": curvature grew past the cap (pre-singular regime ends here)\n";
  return 0;
}

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string resume;
  double t_end = 0.0;
};

int cmd_run(const RunArgs& a) {
  if (!a.resume.empty()) {
    if (!(a.t_end > 0.0)) throw ConfigError("--resume needs --t-end > 0");
    CheckpointInfo info;
    read_checkpoint(a.resume, &info);
    const Trajectory traj = resume_flow(a.resume, a.t_end);
    info.options.t_end = a.t_end;
    const fs::path out = a.out.empty() ? fs::path(a.resume) : fs::path(a.out);
    write_run(out, traj, info);
    std::cout << "resumed to t = " << fmt17(traj.times.back()) << " in " << out.string() << '\n';
    return report_run(a.resume, traj);
  }
  if (a.config.empty()) throw ConfigError("run needs --config or --resume");
  RunConfig c = load_config(a.config);
  apply_seed(c, a.seed);
  const fs::path out = a.out.empty() ? c.out : fs::path(a.out);
  const Trajectory traj = run_config(c);
  write_run(out, traj, {seed_of(c), c.options});
  const StepDiagnostics& last = traj.diagnostics.back();
  std::cout << to_string(traj.spec.kind) << " on " << to_string(traj.backend) << ": " << traj.size()
            << " samples, t = " << fmt17(traj.times.back()) << ", dt = " << fmt17(traj.dt)
            << ", rhs_sup = " << fmt17(last.rhs_sup) << " -> " << out.string() << '\n';
  return report_run(a.config, traj);
}

struct AuditArgs {
  std::vector<std::string> configs;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_audit(const AuditArgs& a, int threads) {
  if (a.configs.size() != 2) throw ConfigError("audit needs exactly two --config files, one per leg");
  RunConfig ca = load_config(a.configs[0]), cb = load_config(a.configs[1]);
  apply_seed(ca, a.seed);
  apply_seed(cb, a.seed);
  const AuditOptions opt = pair_audit_options(ca, cb);
  const fs::path out = a.out.empty() ? ca.out : fs::path(a.out);

  Trajectory ta, tb;
  if (threads >= 2) {
    auto fa = std::async(std::launch::async, [&] { return run_config(ca); });
    tb = run_config(cb);
    ta = fa.get();
  } else {
    ta = run_config(ca);
    tb = run_config(cb);
  }
  write_run(out / "leg_a", ta, {seed_of(ca), ca.options});
  write_run(out / "leg_b", tb, {seed_of(cb), cb.options});
  if (const int rc = std::max(report_run(a.configs[0], ta), report_run(a.configs[1], tb)); rc != 0) return rc;
  if (ta.times.back() != tb.times.back()) throw DomainError("legs stopped at different times; nothing to audit");

  // legs at dt and dt/2: compare on the coarser leg's samples
  if (ta.size() > tb.size()) ta = resample_to(ta, tb);
  if (tb.size() > ta.size()) tb = resample_to(tb, ta);
  const PairAudit audit = audit_pair(ta, tb, opt);
  write_stream(out / "energy.csv", [&](std::ostream& os) { write_energy_csv(os, audit.series, audit.result); });
  const nlohmann::json verdict = audit_verdict_json(audit, ta.spec);
  write_text(out / "verdict.json", verdict.dump(2) + "\n");
  std::cout << "verdict " << to_string(audit.result.verdict) << ": C_fit = " << fmt17(audit.result.c_fit)
            << ", max_violation = " << fmt17(audit.result.max_violation) << ", E(0) = " << fmt17(audit.series.E.front())
            << " -> " << out.string() << '\n';
  return audit.result.verdict == Verdict::fail ? static_cast<int>(ExitCode::check_failure) : 0;
}

struct IdentityArgs {
  std::string scope = "all";
  std::string out;
  bool corrupt = false;
};

int cmd_identities(const IdentityArgs& a) {
  SuiteOptions opt;
  if (a.corrupt) opt.convention = CurvatureConvention::corrupted;
  const std::vector<CheckRecord> records = run_identities(a.scope, opt);
  const nlohmann::json report = identities_report(records, a.scope, a.corrupt);
  // stdout carries the JSON when no --out is given
  std::ostream& log = a.out.empty() ? std::cerr : std::cout;
  for (const CheckRecord& r : records) {
    log << (r.pass ? "pass " : "FAIL ") << r.check << "  [" << r.grid << "] defect " << fmt17(r.defect);
    if (r.ratio) log << " ratio " << fmt17(*r.ratio) << " (expect " << fmt17(*r.expected_ratio) << ")";
    if (!r.note.empty()) log << "  " << r.note;
    log << '\n';
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "identities.json", report.dump(2) + "\n");
  } else {
    std::cout << report.dump(2) << '\n';
  }
  return report["passed"].get<bool>() ? 0 : static_cast<int>(ExitCode::check_failure);
}

int cmd_info(const std::vector<std::string>& configs, int threads) {
  std::cout << "curveflow " << kVersion << "\nthreads " << threads << "\nschemas " << kManifestSchema
            << " curveflow.diagnostics.v1 curveflow.frame.v1 curveflow.energy.v1 " << kAuditSchema << ' '
            << kIdentitiesSchema << "\nidentity scopes:";
  for (const std::string& s : identity_scopes()) std::cout << ' ' << s;
  std::cout << '\n';
  for (const std::string& path : configs) {
    const RunConfig c = load_config(path);
    std::cout << path << ": " << to_string(c.spec.kind) << " on " << to_string(c.backend) << ", recipe "
              << to_string(c.recipe) << ", t_end " << fmt17(c.options.t_end);
    if (c.backend == Backend::grid) {
      double dt = c.options.dt;
      if (!(dt > 0.0)) {
        dt = stable_dt(c.grid, c.spec.operator_order(), c.options.safety);
        dt = c.options.t_end / static_cast<double>(detail::step_count(c.options.t_end, dt));
      }
      std::cout << ", dim " << c.grid.dim << ", nodes " << c.grid.nodes() << ", dt " << fmt17(dt);
      if (c.spec.kind != FlowKind::xcf) {
        const Weights w = choose_weights(c.spec.energy_alpha(), c.grid.dim);
        std::cout << ", audit weights r " << fmt17(w.r) << " eps " << fmt17(w.eps);
      }
    } else {
      std::cout << ", structure " << c.structure << ", dt " << fmt17(c.options.dt);
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curveflow: geometric flows of metrics on tori and homogeneous 3-manifolds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunArgs run;
  CLI::App* run_cmd = app.add_subcommand("run", "integrate one leg and write checkpoint, diagnostics and manifest");
  run_cmd->add_option("--config", run.config, "leg config (INI)");
  run_cmd->add_option("--out", run.out, "output directory (default: [output] dir)");
  run_cmd->add_option("--seed", run.seed, "override the [perturb] seed");
  run_cmd->add_option("--resume", run.resume, "continue the checkpoint in this directory");
  run_cmd->add_option("--t-end", run.t_end, "new end time for --resume");

  AuditArgs audit;
  CLI::App* audit_cmd = app.add_subcommand("audit", "run two legs and audit their difference energy");
  audit_cmd->add_option("--config", audit.configs, "leg config; give it twice")->required();
  audit_cmd->add_option("--out", audit.out, "output directory");
  audit_cmd->add_option("--seed", audit.seed, "override the [perturb] seed");

  IdentityArgs ident;
  CLI::App* ident_cmd = app.add_subcommand("identities", "run the identity suite and emit a JSON report");
  ident_cmd->add_option("--scope", ident.scope, "all, a scope, or a single check name");
  ident_cmd->add_option("--out", ident.out, "write identities.json here instead of stdout");
  ident_cmd->add_flag("--corrupt-convention", ident.corrupt, "negative control: flip the curvature convention");

  std::vector<std::string> info_configs;
  CLI::App* info_cmd = app.add_subcommand("info", "version, schemas, scopes; resolved parameters for configs");
  info_cmd->add_option("--config", info_configs, "config to resolve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config_error);
  }

  try {
    const int threads = threads_from_env();
    if (*run_cmd) return cmd_run(run);
    if (*audit_cmd) return cmd_audit(audit, threads);
    if (*ident_cmd) return cmd_identities(ident);
    return cmd_info(info_configs, threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical_abort);
  }
}
