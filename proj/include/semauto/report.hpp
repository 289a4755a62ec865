#pragma once

#include <span>
#include <string>
#include <vector>

#include "semauto/metrics.hpp"
#include "semauto/serialize.hpp"
#include "semauto/study.hpp"

namespace semauto {

inline constexpr int kReportSchemaVersion = 1;

namespace detail {

inline std::vector<double> values_of(const std::map<UserId, double>& per_user) {
  std::vector<double> v;
  for (const auto& [u, x] : per_user) v.push_back(x);
  return v;
}

inline Json rank_sum_json(const ArmRecords& a, const ArmRecords& b, std::string_view quantity,
                          const std::vector<double>& xa, const std::vector<double>& xb) {
  Json j{{"arm_a", a.arm.label()}, {"arm_b", b.arm.label()}, {"quantity", quantity}};
  if (xa.empty() || xb.empty()) {
    j["u"] = nullptr;
    j["p_value"] = nullptr;
    j["exact"] = nullptr;
    return j;
  }
  auto r = wilcoxon_ranksum(xa, xb);
  j["u"] = r.u;
  j["p_value"] = r.p_value;
  j["exact"] = r.exact;
  return j;
}

}  // namespace detail

// Per-arm metrics plus pairwise rank-sum tests on the per-user persuasiveness
// and effectiveness values. Metrics of an arm without completed sessions are
// null; every arm carries its sample-size gate.
inline Json build_report(std::span<const ArmRecords> arms, std::size_t n = kExplainedItems) {
  Json out{{"schema_version", kReportSchemaVersion},
           {"N", n},
           {"satisfaction_scale", Json{{"really", 2}, {"partially", 1}, {"not", 0}}},
           {"min_subjects_per_arm", kMinSubjectsPerArm}};
  Json arm_list = Json::array();
  std::vector<std::vector<double>> pers(arms.size()), eff(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const auto& rec = arms[a];
    const auto gate = sample_size_gate(rec.answers.size());
    Json j{{"arm", rec.arm.label()},
           {"style", to_string(rec.arm.style)},
           {"mode", to_string(rec.arm.mode)},
           {"n", rec.answers.size()},
           {"incomplete", rec.incomplete},
           {"sample_size_ok", gate.passed}};
    if (rec.answers.empty()) {
      for (auto key : {"persuasiveness", "effectiveness", "transparency", "trust", "satisfaction"}) j[key] = nullptr;
    } else {
      const auto pu = persuasiveness_per_user(rec.triplets, n);
      const auto eu = effectiveness_per_user(rec.triplets, n);
      pers[a] = detail::values_of(pu);
      eff[a] = detail::values_of(eu);
      const auto q = questionnaire_metrics(rec.answers);
      j["persuasiveness"] = detail::mean(pers[a]);
      j["effectiveness"] = detail::mean(eff[a]);
      j["transparency"] = q.transparency;
      j["trust"] = q.trust;
      j["satisfaction"] = q.satisfaction;
    }
    if (!gate.passed)
      j["warning"] = "n=" + std::to_string(gate.n) + " is below the " + std::to_string(gate.minimum) +
                     " subjects per arm needed for the planned power";
    arm_list.push_back(std::move(j));
  }
  out["arms"] = std::move(arm_list);

  Json tests = Json::array();
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t b = a + 1; b < arms.size(); ++b) {
      tests.push_back(detail::rank_sum_json(arms[a], arms[b], "persuasiveness", pers[a], pers[b]));
      tests.push_back(detail::rank_sum_json(arms[a], arms[b], "effectiveness", eff[a], eff[b]));
    }
  out["rank_sum_tests"] = std::move(tests);
  return out;
}

inline Json build_report(std::span<const StudySession> sessions, std::span<const Arm> grid) {
  const auto records = collect_records(sessions, grid);
  return build_report(std::span<const ArmRecords>(records));
}

}  // namespace semauto
