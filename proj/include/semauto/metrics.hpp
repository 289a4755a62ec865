#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semauto/data.hpp"
#include "semauto/error.hpp"

namespace semauto {

// Ratings one user gave one recommended item: before the explanation (r),
// after it (r_e) and after watching the trailer (r_t). All on the 1-5 scale.
struct RatingTriplet {
  UserId user = 0;
  ItemId item = 0;
  double r = 0.0;
  std::optional<double> r_e;
  std::optional<double> r_t;
};

enum class Satisfaction { does_not_capture = 0, partially_captures = 1, really_captures = 2 };

inline std::string_view to_string(Satisfaction s) {
  switch (s) {
    case Satisfaction::really_captures: return "really";
    case Satisfaction::partially_captures: return "partially";
    case Satisfaction::does_not_capture: return "not";
  }
  return "?";
}

inline Satisfaction parse_satisfaction(std::string_view s) {
  if (s == "really" || s == "really_captures") return Satisfaction::really_captures;
  if (s == "partially" || s == "partially_captures") return Satisfaction::partially_captures;
  if (s == "not" || s == "does_not_capture") return Satisfaction::does_not_capture;
  throw ConfigError("unknown satisfaction answer '" + std::string(s) + "' (expected really, partially or not)");
}

// Numeric scale used for the satisfaction average.
inline double satisfaction_score(Satisfaction s) { return static_cast<double>(static_cast<int>(s)); }

struct QuestionnaireAnswer {
  UserId user = 0;
  bool transparency = false;
  bool trust = false;
  Satisfaction satisfaction = Satisfaction::does_not_capture;
};

namespace detail {

// Groups triplets by user with each user's triplets sorted by item, so that
// every metric is independent of record order.
inline std::map<UserId, std::vector<RatingTriplet>> by_user(std::span<const RatingTriplet> records, std::size_t n) {
  if (n == 0) throw ContractError("metrics: N must be positive");
  std::map<UserId, std::vector<RatingTriplet>> out;
  for (const auto& t : records) out[t.user].push_back(t);
  for (auto& [user, ts] : out) {
    if (ts.size() != n)
      throw ContractError("metrics: user " + std::to_string(user) + " has " + std::to_string(ts.size()) +
                          " triplets, expected " + std::to_string(n));
    std::sort(ts.begin(), ts.end(), [](const auto& a, const auto& b) { return a.item < b.item; });
  }
  return out;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("metrics: mean of an empty set");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline std::string where(const RatingTriplet& t) {
  return "user " + std::to_string(t.user) + ", item " + std::to_string(t.item);
}

}  // namespace detail

// Per-user mean of (r_e - r), keyed by user.
inline std::map<UserId, double> persuasiveness_per_user(std::span<const RatingTriplet> records, std::size_t n) {
  std::map<UserId, double> out;
  for (const auto& [user, ts] : detail::by_user(records, n)) {
    double s = 0.0;
    for (const auto& t : ts) {
      if (!t.r_e) throw ContractError("persuasiveness: missing post-explanation rating for " + detail::where(t));
      s += *t.r_e - t.r;
    }
    out[user] = s / static_cast<double>(n);
  }
  return out;
}

// Per-user mean of |r_e - r_t|, keyed by user.
inline std::map<UserId, double> effectiveness_per_user(std::span<const RatingTriplet> records, std::size_t n) {
  std::map<UserId, double> out;
  for (const auto& [user, ts] : detail::by_user(records, n)) {
    double s = 0.0;
    for (const auto& t : ts) {
      if (!t.r_e) throw ContractError("effectiveness: missing post-explanation rating for " + detail::where(t));
      if (!t.r_t) throw ContractError("effectiveness: missing post-trailer rating for " + detail::where(t));
      s += std::abs(*t.r_e - *t.r_t);
    }
    out[user] = s / static_cast<double>(n);
  }
  return out;
}

namespace detail {
inline double mean_of_values(const std::map<UserId, double>& per_user) {
  std::vector<double> v;
  v.reserve(per_user.size());
  for (const auto& [u, x] : per_user) v.push_back(x);
  return mean(v);
}
}  // namespace detail

// (1/|U|) sum_u (1/N) sum_i (r_e - r). Positive means explanations raised ratings.
inline double persuasiveness(std::span<const RatingTriplet> records, std::size_t n) {
  return detail::mean_of_values(persuasiveness_per_user(records, n));
}

// (1/|U|) sum_u (1/N) sum_i |r_e - r_t|. Lower is better.
inline double effectiveness(std::span<const RatingTriplet> records, std::size_t n) {
  return detail::mean_of_values(effectiveness_per_user(records, n));
}

struct QuestionnaireSummary {
  std::size_t n = 0;
  double transparency = 0.0;  // fraction agreeing
  double trust = 0.0;         // fraction agreeing
  double satisfaction = 0.0;  // mean on the {0,1,2} scale
};

inline QuestionnaireSummary questionnaire_metrics(std::span<const QuestionnaireAnswer> answers) {
  if (answers.empty()) throw ContractError("questionnaire_metrics: no answers");
  std::size_t transparent = 0, trusting = 0;
  double sat = 0.0;
  for (const auto& a : answers) {
    transparent += a.transparency;
    trusting += a.trust;
    sat += satisfaction_score(a.satisfaction);
  }
  const double n = static_cast<double>(answers.size());
  return {answers.size(), static_cast<double>(transparent) / n, static_cast<double>(trusting) / n, sat / n};
}

// ---------------------------------------------------------------------------
// Wilcoxon rank-sum (Mann-Whitney) test
// ---------------------------------------------------------------------------

struct RankSumResult {
  double u = 0.0;         // U statistic of the first sample
  double rank_sum = 0.0;  // sum of midranks of the first sample
  double p_value = 1.0;   // two-sided
  bool exact = false;
};

// Midranks (1-based) of the pooled sample a ++ b, plus the tie-group sizes.
inline std::vector<double> pooled_midranks(std::span<const double> a, std::span<const double> b,
                                           std::vector<std::size_t>* tie_sizes = nullptr) {
  const std::size_t n = a.size() + b.size();
  std::vector<std::pair<double, std::size_t>> pooled;
  pooled.reserve(n);
  for (std::size_t k = 0; k < a.size(); ++k) pooled.emplace_back(a[k], k);
  for (std::size_t k = 0; k < b.size(); ++k) pooled.emplace_back(b[k], a.size() + k);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> ranks(n);
  for (std::size_t s = 0; s < n;) {
    std::size_t e = s + 1;
    while (e < n && pooled[e].first == pooled[s].first) ++e;
    const double mid = 0.5 * static_cast<double>(s + 1 + e);
    for (auto k = s; k < e; ++k) ranks[pooled[k].second] = mid;
    if (tie_sizes) tie_sizes->push_back(e - s);
    s = e;
  }
  return ranks;
}

namespace detail {

inline void check_samples(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("wilcoxon: both samples must be non-empty");
  for (double x : a)
    if (!std::isfinite(x)) throw ContractError("wilcoxon: non-finite observation");
  for (double x : b)
    if (!std::isfinite(x)) throw ContractError("wilcoxon: non-finite observation");
}

}  // namespace detail

inline constexpr std::size_t kExactWilcoxonMaxN = 12;

// Exact two-sided p: the share of all C(n, |a|) assignments of the pooled
// midranks to the first sample whose rank sum is at least as far from its
// null mean as the observed one.
inline RankSumResult wilcoxon_exact(std::span<const double> a, std::span<const double> b) {
  detail::check_samples(a, b);
  const std::size_t na = a.size(), n = a.size() + b.size();
  if (n > 24) throw ContractError("wilcoxon_exact: enumeration limited to 24 observations");
  const auto ranks = pooled_midranks(a, b);
  double observed = 0.0;
  for (std::size_t k = 0; k < na; ++k) observed += ranks[k];
  const double center = static_cast<double>(na) * static_cast<double>(n + 1) / 2.0;
  const double dev = std::abs(observed - center) - 1e-9;

  std::uint64_t extreme = 0, total = 0;
  std::vector<std::size_t> pick(na);
  for (std::size_t k = 0; k < na; ++k) pick[k] = k;
  while (true) {
    double s = 0.0;
    for (auto k : pick) s += ranks[k];
    ++total;
    if (std::abs(s - center) >= dev) ++extreme;
    // next combination in lexicographic order
    std::size_t k = na;
    while (k > 0 && pick[k - 1] == n - na + k - 1) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (auto t = k; t < na; ++t) pick[t] = pick[t - 1] + 1;
  }
  RankSumResult r;
  r.rank_sum = observed;
  r.u = observed - static_cast<double>(na * (na + 1)) / 2.0;
  r.p_value = static_cast<double>(extreme) / static_cast<double>(total);
  r.exact = true;
  return r;
}

// Normal approximation with tie-corrected variance and continuity correction.
inline RankSumResult wilcoxon_normal(std::span<const double> a, std::span<const double> b) {
  detail::check_samples(a, b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  std::vector<std::size_t> ties;
  const auto ranks = pooled_midranks(a, b, &ties);
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) rank_sum += ranks[k];
  RankSumResult r;
  r.rank_sum = rank_sum;
  r.u = rank_sum - na * (na + 1.0) / 2.0;

  double tie_term = 0.0;
  for (auto t : ties) tie_term += std::pow(static_cast<double>(t), 3) - static_cast<double>(t);
  const double variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  const double deviation = std::abs(r.u - na * nb / 2.0) - 0.5;
  if (variance <= 0.0 || deviation <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = deviation / std::sqrt(variance);
  r.p_value = std::clamp(std::erfc(z / std::sqrt(2.0)), std::numeric_limits<double>::min(), 1.0);
  return r;
}

// Exact enumeration up to 12 pooled observations, normal approximation beyond.
inline RankSumResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b) {
  if (a.size() + b.size() <= kExactWilcoxonMaxN) return wilcoxon_exact(a, b);
  return wilcoxon_normal(a, b);
}

// ---------------------------------------------------------------------------
// Sample size
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMinSubjectsPerArm = 73;

struct SampleSizeGate {
  std::size_t n = 0;
  std::size_t minimum = kMinSubjectsPerArm;
  bool passed = false;
};

inline SampleSizeGate sample_size_gate(std::size_t n_per_arm) {
  return {n_per_arm, kMinSubjectsPerArm, n_per_arm >= kMinSubjectsPerArm};
}

}  // namespace semauto
