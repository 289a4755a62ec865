#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "semauto/study.hpp"

namespace semauto {

enum class CohortModel {
  // Ratings follow a latent feature affinity; explanations change nothing.
  neutral,
  // Like neutral, but personalized explanations (pointwise, pairwise) raise the
  // post-explanation rating and the trailer confirms it, and the questionnaire
  // favors them.
  pro_personalized,
};

inline std::string_view to_string(CohortModel m) { return m == CohortModel::neutral ? "neutral" : "pro_personalized"; }

inline CohortModel parse_cohort_model(std::string_view s) {
  if (s == "neutral") return CohortModel::neutral;
  if (s == "pro_personalized" || s == "pro-personalized") return CohortModel::pro_personalized;
  throw ConfigError("unknown cohort model '" + std::string(s) + "' (expected neutral or pro_personalized)");
}

// A simulated participant: a latent affinity in [0,1] per KG feature derived
// from the session seed, so the same session always answers the same way.
class SimulatedUser {
 public:
  SimulatedUser(std::uint64_t seed, CohortModel model) : seed_(seed), model_(model), rng_(derive_seed(seed, 101)) {}

  double affinity(const Feature& f) const {
    const auto h = derive_seed(seed_, hash_string(f.predicate + ' ' + f.entity));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  // 1-5 stars from the mean affinity of the item's features, with noise.
  int stars_for(const StudyData& data, KgMode mode, ItemId item, int max_stars = 5) {
    const auto projection = data.projection(mode);
    const auto row = data.catalog.require_row(item);
    double sum = 0.0;
    std::size_t count = 0;
    for (auto j : projection->mask.row_support(row)) {
      sum += affinity(projection->space[j]);
      ++count;
    }
    const double base = count ? sum / static_cast<double>(count) : 0.5;
    std::normal_distribution<double> noise(0.0, 0.5);
    const double stars = 1.0 + 4.0 * base + noise(rng_);
    return std::clamp(static_cast<int>(std::lround(stars)), 1, max_stars);
  }

  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }

  std::mt19937_64& rng() { return rng_; }
  CohortModel model() const { return model_; }

 private:
  std::uint64_t seed_;
  CohortModel model_;
  std::mt19937_64 rng_;
};

// Drives one session through all seven steps with simulated answers.
inline StudySession simulate_session(StudyEngine& engine, const std::string& id, CohortModel model) {
  auto s = engine.get(id);
  const auto& data = engine.data();
  SimulatedUser user(s.seed, model);

  auto selected = sample_without_replacement(s.candidates, engine.config().min_selection, user.rng());
  s = engine.submit_selection(id, selected);

  std::vector<std::pair<ItemId, int>> ratings;
  for (auto item : s.selected) ratings.emplace_back(item, user.stars_for(data, s.arm.mode, item));
  s = engine.submit_ratings(id, ratings);
  if (s.step == Step::recommend) s = engine.complete_training(id);

  const bool personalized = is_personalized(s.arm.style);
  const bool favored = model == CohortModel::pro_personalized && personalized;
  // Leave headroom for the explanation effect.
  const int cap = model == CohortModel::pro_personalized ? 4 : 5;
  std::vector<int> pre;
  for (const auto& r : s.recommendations) pre.push_back(user.stars_for(data, s.arm.mode, r.item, cap));
  s = engine.capture_pre_ratings(id, pre);

  std::vector<int> post_e, post_t;
  for (std::size_t k = 0; k < kExplainedItems; ++k) {
    const int r = s.pre_ratings[k];
    if (model == CohortModel::neutral) {
      post_e.push_back(r);
      post_t.push_back(std::clamp(r + (user.chance(0.5) ? 1 : -1), 1, 5));
    } else if (favored) {
      post_e.push_back(r + 1);
      post_t.push_back(r + 1);  // the trailer confirms the explained expectation
    } else {
      post_e.push_back(r);
      post_t.push_back(r + 1);
    }
  }
  s = engine.capture_post_explanation(id, post_e);
  s = engine.capture_post_trailer(id, post_t);

  QuestionnaireInput q;
  if (model == CohortModel::neutral) {
    q.transparency = user.chance(0.5);
    q.trust = user.chance(0.5);
    q.satisfaction = static_cast<Satisfaction>(uniform_below(user.rng(), 3));
  } else {
    q.transparency = favored;
    q.trust = favored;
    q.satisfaction = favored ? Satisfaction::really_captures : Satisfaction::does_not_capture;
  }
  return engine.submit_questionnaire(id, q);
}

// `per_arm` complete sessions for every arm of the engine's grid, arms
// interleaved so the log resembles a live study.
inline std::vector<StudySession> simulate_cohort(StudyEngine& engine, std::size_t per_arm, CohortModel model) {
  if (per_arm < 1) throw ConfigError("simulate: need at least one participant per arm");
  std::vector<StudySession> out;
  const auto arms = engine.config().arms;
  for (std::size_t k = 0; k < per_arm; ++k)
    for (const auto& arm : arms) {
      auto s = engine.create_session(arm);
      out.push_back(simulate_session(engine, s.id, model));
    }
  return out;
}

}  // namespace semauto
