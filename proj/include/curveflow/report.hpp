#pragma once

// JSON records for identity checks and audit verdicts.

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curveflow/runtime.hpp"

namespace curveflow {

inline constexpr const char* kIdentitiesSchema = "curveflow.identities.v1";
inline constexpr const char* kAuditSchema = "curveflow.audit.v1";

struct CheckRecord {
  std::string check;
  std::string scope;
  std::string grid;  // "16^2->32^2", "10^3", "frame su2(1,1.08,0.93)"
  int fd_order = 0;  // 0 for frame and time-only checks
  double defect = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  // refinement checks: coarse/fine defect ratio and the expected 2^order
  std::optional<double> ratio;
  std::optional<double> expected_ratio;
  std::string note;
};

// NaN and infinities are not JSON numbers; they are written as null.
inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const CheckRecord& r) {
  nlohmann::json j{{"check", r.check},       {"scope", r.scope},
                   {"grid", r.grid},         {"fd_order", r.fd_order},
                   {"defect", json_number(r.defect)}, {"tolerance", json_number(r.tolerance)},
                   {"pass", r.pass}};
  if (r.ratio) j["ratio"] = json_number(*r.ratio);
  if (r.expected_ratio) j["expected_ratio"] = json_number(*r.expected_ratio);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline CheckRecord check_record_from_json(const nlohmann::json& j) {
  auto num = [](const nlohmann::json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
  CheckRecord r;
  r.check = j.at("check");
  r.scope = j.value("scope", "");
  r.grid = j.at("grid");
  r.fd_order = j.at("fd_order");
  r.defect = num(j.at("defect"));
  r.tolerance = num(j.at("tolerance"));
  r.pass = j.at("pass");
  if (j.contains("ratio")) r.ratio = num(j["ratio"]);
  if (j.contains("expected_ratio")) r.expected_ratio = num(j["expected_ratio"]);
  r.note = j.value("note", "");
  return r;
}

inline nlohmann::json identities_report(const std::vector<CheckRecord>& records, const std::string& scope,
                                        bool corrupted) {
  nlohmann::json j;
  j["schema"] = kIdentitiesSchema;
  j["scope"] = scope;
  j["corrupted_convention"] = corrupted;
  j["records"] = nlohmann::json::array();
  bool all = true;
  for (const CheckRecord& r : records) {
    j["records"].push_back(to_json(r));
    all = all && r.pass;
  }
  j["passed"] = all;
  return j;
}

inline nlohmann::json audit_verdict_json(const PairAudit& a, const FlowSpec& spec) {
  return {{"schema", kAuditSchema},
          {"flow", to_string(spec.kind)},
          {"k", spec.energy_k()},
          {"alpha", spec.alpha},
          {"beta", spec.beta},
          {"r", a.series.r},
          {"eps", a.series.eps},
          {"C_fit", json_number(a.result.c_fit)},
          {"max_violation", json_number(a.result.max_violation)},
          {"verdict", to_string(a.result.verdict)}};
}

}  // namespace curveflow
