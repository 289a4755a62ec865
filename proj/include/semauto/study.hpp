#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semauto/autoencoder.hpp"
#include "semauto/data.hpp"
#include "semauto/explain.hpp"
#include "semauto/metrics.hpp"
#include "semauto/profile.hpp"
#include "semauto/random.hpp"
#include "semauto/serialize.hpp"

namespace semauto {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Steps and arms
// ---------------------------------------------------------------------------

// select/rate: Steps 1-3 input; recommend: training in progress;
// pre_rate: Step 4; explain_rerate: Step 5; trailer_rerate: Step 6;
// questionnaire: Step 7.
enum class Step { select, rate, recommend, pre_rate, explain_rerate, trailer_rerate, questionnaire, done };

inline constexpr std::array<Step, 8> kAllSteps{Step::select,         Step::rate,           Step::recommend,
                                               Step::pre_rate,       Step::explain_rerate, Step::trailer_rerate,
                                               Step::questionnaire, Step::done};

inline std::string_view to_string(Step s) {
  switch (s) {
    case Step::select: return "select";
    case Step::rate: return "rate";
    case Step::recommend: return "recommend";
    case Step::pre_rate: return "pre_rate";
    case Step::explain_rerate: return "explain_rerate";
    case Step::trailer_rerate: return "trailer_rerate";
    case Step::questionnaire: return "questionnaire";
    case Step::done: return "done";
  }
  return "?";
}

inline Step parse_step(std::string_view s) {
  for (auto step : kAllSteps)
    if (to_string(step) == s) return step;
  throw ParseError("unknown study step '" + std::string(s) + "'");
}

// One (explanation style x KG configuration) cell of the experiment.
struct Arm {
  Style style = Style::pairwise;
  KgMode mode = KgMode::both;

  std::string label() const { return std::string(to_string(style)) + "/" + std::string(to_string(mode)); }
  auto operator<=>(const Arm&) const = default;
};

inline std::vector<Arm> arm_grid(std::span<const Style> styles, std::span<const KgMode> modes) {
  std::vector<Arm> out;
  for (auto s : styles)
    for (auto m : modes) out.push_back({s, m});
  return out;
}

inline std::vector<Arm> default_arm_grid() { return arm_grid(kAllStyles, kAllKgModes); }

inline Json to_json(const Arm& a) { return Json{{"style", to_string(a.style)}, {"mode", to_string(a.mode)}}; }
inline Arm arm_from_json(const Json& j) {
  return {parse_style(j.at("style").get<std::string>()), parse_kg_mode(j.at("mode").get<std::string>())};
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Rejection { not_found, wrong_step, invalid_count, out_of_scale, invalid_item, incomplete, unavailable };

inline std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::not_found: return "not_found";
    case Rejection::wrong_step: return "wrong_step";
    case Rejection::invalid_count: return "invalid_count";
    case Rejection::out_of_scale: return "out_of_scale";
    case Rejection::invalid_item: return "invalid_item";
    case Rejection::incomplete: return "incomplete";
    case Rejection::unavailable: return "unavailable";
  }
  return "?";
}

// A study request that the state machine refused. The session is unchanged.
class StudyError : public Error {
 public:
  StudyError(Rejection reason, const std::string& what) : Error(what), reason_(reason) {}
  Rejection reason() const { return reason_; }

 private:
  Rejection reason_;
};

// ---------------------------------------------------------------------------
// Session snapshot
// ---------------------------------------------------------------------------

struct StudySession {
  std::string id;
  UserId user = 0;
  Arm arm;
  std::uint64_t seed = 0;
  Step step = Step::select;
  std::vector<ItemId> candidates;
  std::vector<ItemId> selected;
  std::vector<std::pair<ItemId, int>> initial_ratings;
  std::vector<Recommendation> recommendations;
  double final_loss = 0.0;
  std::vector<int> pre_ratings;               // r, one per recommended item
  std::vector<int> post_explanation_ratings;  // r_e, top-2
  std::vector<int> post_trailer_ratings;      // r_t, top-2
  std::optional<ExplanationBundle> explanation;
  std::optional<QuestionnaireAnswer> questionnaire;
  std::vector<std::pair<Step, std::int64_t>> transitions;  // step entered, timestamp
};

inline Json to_json(const StudySession& s) {
  Json ratings = Json::array();
  for (const auto& [item, stars] : s.initial_ratings) ratings.push_back(Json{{"item", item}, {"stars", stars}});
  Json recs = Json::array();
  for (const auto& r : s.recommendations) recs.push_back(to_json(r));
  Json transitions = Json::array();
  for (const auto& [step, at] : s.transitions) transitions.push_back(Json{{"step", to_string(step)}, {"at", at}});
  return Json{{"id", s.id},
              {"user", s.user},
              {"arm", to_json(s.arm)},
              {"seed", s.seed},
              {"step", to_string(s.step)},
              {"candidates", s.candidates},
              {"selected", s.selected},
              {"initial_ratings", std::move(ratings)},
              {"recommendations", std::move(recs)},
              {"final_loss", s.final_loss},
              {"pre_ratings", s.pre_ratings},
              {"post_explanation_ratings", s.post_explanation_ratings},
              {"post_trailer_ratings", s.post_trailer_ratings},
              {"explanation", s.explanation ? to_json(*s.explanation) : Json(nullptr)},
              {"questionnaire", s.questionnaire ? to_json(*s.questionnaire) : Json(nullptr)},
              {"transitions", std::move(transitions)}};
}

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

struct StudyEvent {
  std::uint64_t seq = 0;
  std::string session;
  std::string type;
  std::int64_t at = 0;
  Json data;
};

inline Json to_json(const StudyEvent& e) {
  return Json{{"seq", e.seq}, {"session", e.session}, {"type", e.type}, {"at", e.at}, {"data", e.data}};
}

inline StudyEvent event_from_json(const Json& j) {
  return {j.at("seq").get<std::uint64_t>(), j.at("session").get<std::string>(), j.at("type").get<std::string>(),
          j.at("at").get<std::int64_t>(), j.at("data")};
}

namespace detail {

inline void expect_step(const StudySession& s, Step expected, const StudyEvent& e) {
  if (s.step != expected)
    throw ParseError("event log: " + e.type + " for session " + s.id + " in step " + std::string(to_string(s.step)));
}

inline void enter(StudySession& s, Step step, std::int64_t at) {
  s.step = step;
  s.transitions.emplace_back(step, at);
}

}  // namespace detail

// Folds one event into the session map. The live engine and log replay both
// go through here, so replay reproduces every snapshot.
inline void apply_event(std::map<std::string, StudySession>& sessions, const StudyEvent& e) {
  const auto& d = e.data;
  if (e.type == "session_created") {
    if (sessions.contains(e.session)) throw ParseError("event log: session " + e.session + " created twice");
    StudySession s;
    s.id = e.session;
    s.user = d.at("user").get<UserId>();
    s.arm = arm_from_json(d.at("arm"));
    s.seed = d.at("seed").get<std::uint64_t>();
    s.candidates = d.at("candidates").get<std::vector<ItemId>>();
    detail::enter(s, Step::select, e.at);
    sessions.emplace(s.id, std::move(s));
    return;
  }
  auto it = sessions.find(e.session);
  if (it == sessions.end()) throw ParseError("event log: " + e.type + " for unknown session " + e.session);
  StudySession& s = it->second;
  if (e.type == "selection_submitted") {
    detail::expect_step(s, Step::select, e);
    s.selected = d.at("items").get<std::vector<ItemId>>();
    detail::enter(s, Step::rate, e.at);
  } else if (e.type == "ratings_submitted") {
    detail::expect_step(s, Step::rate, e);
    s.initial_ratings.clear();
    for (const auto& r : d.at("ratings")) s.initial_ratings.emplace_back(r.at("item").get<ItemId>(), r.at("stars").get<int>());
    detail::enter(s, Step::recommend, e.at);
  } else if (e.type == "recommendations_computed") {
    detail::expect_step(s, Step::recommend, e);
    s.recommendations.clear();
    for (const auto& r : d.at("items")) s.recommendations.push_back(recommendation_from_json(r));
    s.final_loss = d.at("final_loss").get<double>();
    detail::enter(s, Step::pre_rate, e.at);
  } else if (e.type == "pre_ratings_submitted") {
    detail::expect_step(s, Step::pre_rate, e);
    s.pre_ratings = d.at("ratings").get<std::vector<int>>();
    s.explanation = bundle_from_json(d.at("explanation"));
    detail::enter(s, Step::explain_rerate, e.at);
  } else if (e.type == "post_explanation_submitted") {
    detail::expect_step(s, Step::explain_rerate, e);
    s.post_explanation_ratings = d.at("ratings").get<std::vector<int>>();
    detail::enter(s, Step::trailer_rerate, e.at);
  } else if (e.type == "post_trailer_submitted") {
    detail::expect_step(s, Step::trailer_rerate, e);
    s.post_trailer_ratings = d.at("ratings").get<std::vector<int>>();
    detail::enter(s, Step::questionnaire, e.at);
  } else if (e.type == "questionnaire_submitted") {
    detail::expect_step(s, Step::questionnaire, e);
    s.questionnaire = QuestionnaireAnswer{s.user, d.at("transparency").get<bool>(), d.at("trust").get<bool>(),
                                          parse_satisfaction(d.at("satisfaction").get<std::string>())};
    detail::enter(s, Step::done, e.at);
  } else {
    throw ParseError("event log: unknown event type '" + e.type + "'");
  }
}

struct EventLogRead {
  std::vector<StudyEvent> events;
  std::size_t torn_lines = 0;  // unparsable trailing line(s) from an interrupted write
};

// Reads a line-delimited event log. Only the final line may be torn; damage
// anywhere else is an error.
inline EventLogRead read_event_log(std::istream& in) {
  EventLogRead out;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> bad_line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (bad_line) throw ParseError("event log: corrupt record", *bad_line);
    auto j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      bad_line = lineno;
      continue;
    }
    out.events.push_back(event_from_json(j));
  }
  if (bad_line) out.torn_lines = 1;
  return out;
}

inline std::map<std::string, StudySession> replay(std::span<const StudyEvent> events) {
  std::map<std::string, StudySession> sessions;
  for (const auto& e : events) apply_event(sessions, e);
  return sessions;
}

// Append-only event log, optionally mirrored to a file (one JSON object per
// line, flushed per event). Safe for concurrent appends.
class SessionStore {
 public:
  SessionStore() = default;

  // Opens (or creates) a log file; existing events are loaded first.
  explicit SessionStore(const std::filesystem::path& path) : path_(path) {
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      auto read = read_event_log(in);
      events_ = std::move(read.events);
      torn_ = read.torn_lines;
      if (torn_) rewrite();
    }
    file_.open(path, std::ios::app);
    if (!file_) throw Error("cannot open event log " + path.string());
  }

  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  StudyEvent append(StudyEvent e) {
    std::lock_guard lock(mu_);
    e.seq = events_.size() + 1;
    if (file_.is_open()) {
      file_ << to_json(e).dump() << '\n';
      file_.flush();
      if (!file_) throw Error("event log write failed");
    }
    events_.push_back(e);
    return e;
  }

  std::vector<StudyEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

  // Torn records dropped when the log was opened.
  std::size_t recovered_torn_lines() const { return torn_; }

  void flush() {
    std::lock_guard lock(mu_);
    if (file_.is_open()) file_.flush();
  }

  void write(std::ostream& out) const {
    std::lock_guard lock(mu_);
    for (const auto& e : events_) out << to_json(e).dump() << '\n';
  }

 private:
  void rewrite() {
    std::ofstream out(path_, std::ios::trunc);
    for (const auto& e : events_) out << to_json(e).dump() << '\n';
  }

  mutable std::mutex mu_;
  std::filesystem::path path_;
  std::ofstream file_;
  std::vector<StudyEvent> events_;
  std::size_t torn_ = 0;
};

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

// Immutable inputs shared by every session: the catalog, one KG projection per
// configured mode and the pool that Step 1 candidates are drawn from.
struct StudyData {
  Catalog catalog;
  std::map<KgMode, std::shared_ptr<const KgProjection>> projections;
  std::vector<ItemId> candidate_pool;

  std::shared_ptr<const MaskMatrix> mask(KgMode mode) const {
    auto p = projection(mode);
    return std::shared_ptr<const MaskMatrix>(p, &p->mask);
  }

  std::shared_ptr<const KgProjection> projection(KgMode mode) const {
    auto it = projections.find(mode);
    if (it == projections.end()) throw ConfigError("KG mode " + std::string(to_string(mode)) + " is not loaded");
    return it->second;
  }
};

// Candidates come from the most-rated quartile of the catalog (by rating
// count, ties by item id), widened to at least `minimum` items.
inline std::vector<ItemId> popular_pool(const Catalog& catalog, const RatingsTable* ratings, std::size_t minimum) {
  std::vector<std::pair<std::size_t, ItemId>> ranked;
  std::unordered_map<ItemId, std::size_t> counts;
  if (ratings) counts = ratings->item_counts();
  for (const auto& item : catalog.items()) ranked.emplace_back(counts[item.id], item.id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t quartile = (ranked.size() + 3) / 4;
  const std::size_t keep = std::min(ranked.size(), std::max(quartile, minimum));
  std::vector<ItemId> out;
  for (std::size_t k = 0; k < keep; ++k) out.push_back(ranked[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::shared_ptr<const StudyData> make_study_data(Catalog catalog, std::span<const Triple> triples,
                                                        const KgConfig& predicates, std::span<const KgMode> modes,
                                                        const RatingsTable* ratings, std::size_t pool_minimum) {
  auto data = std::make_shared<StudyData>();
  for (auto mode : modes) {
    if (data->projections.contains(mode)) continue;
    KgConfig cfg = predicates;
    cfg.mode = mode;
    data->projections.emplace(mode, std::make_shared<const KgProjection>(build_feature_space(triples, catalog, cfg)));
  }
  data->candidate_pool = popular_pool(catalog, ratings, pool_minimum);
  data->catalog = std::move(catalog);
  return data;
}

struct StudyConfig {
  std::vector<Arm> arms = default_arm_grid();
  std::size_t candidate_sample = 30;
  std::size_t min_selection = 15;
  std::size_t top_n = 5;
  std::size_t k = kDefaultK;
  TrainConfig train;
  std::uint64_t seed = 1;
  // Train inside submit_ratings. When false the caller runs complete_training
  // (the HTTP service does so on a worker thread).
  bool synchronous_training = true;

  void validate() const {
    if (arms.empty()) throw ConfigError("study: empty arm grid");
    if (min_selection == 0) throw ConfigError("study: min_selection must be positive");
    if (candidate_sample < min_selection) throw ConfigError("study: candidate sample smaller than the minimum selection");
    if (top_n < 2) throw ConfigError("study: top_n must be at least 2");
    if (k == 0) throw ConfigError("study: k must be positive");
    train.validate();
  }
};

struct QuestionnaireInput {
  std::optional<bool> transparency;
  std::optional<bool> trust;
  std::optional<Satisfaction> satisfaction;
};

// Monotonic clock in milliseconds; the simulator plugs in a logical clock so
// event logs are reproducible.
using Clock = std::function<std::int64_t()>;

inline Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  };
}

inline Clock logical_clock() {
  auto tick = std::make_shared<std::int64_t>(0);
  return [tick] { return ++*tick; };
}

// Runs the seven-step protocol. Every accepted request becomes one event in
// the store; rejected requests leave the session untouched. Requests for one
// session are serialized; sessions proceed independently.
class StudyEngine {
 public:
  StudyEngine(std::shared_ptr<const StudyData> data, StudyConfig config, SessionStore& store,
              Clock clock = system_clock_ms())
      : data_(std::move(data)), cfg_(std::move(config)), store_(store), clock_(std::move(clock)) {
    cfg_.validate();
    if (data_->catalog.empty()) throw ConfigError("study: empty catalog");
    if (data_->candidate_pool.size() < cfg_.min_selection)
      throw ConfigError("study: candidate pool smaller than the minimum selection");
    for (const auto& arm : cfg_.arms) data_->projection(arm.mode);
    sessions_ = replay(store_.events());
    created_ = sessions_.size();
  }

  const StudyConfig& config() const { return cfg_; }
  const StudyData& data() const { return *data_; }

  StudySession create_session(std::optional<Arm> forced = std::nullopt, std::optional<UserId> user = std::nullopt) {
    std::lock_guard lock(mu_);
    const std::uint64_t number = ++created_;
    const std::uint64_t seed = derive_seed(cfg_.seed, number);
    Arm arm;
    if (forced) {
      data_->projection(forced->mode);
      arm = *forced;
    } else {
      std::mt19937_64 rng(derive_seed(seed, 1));
      arm = cfg_.arms[uniform_below(rng, cfg_.arms.size())];
    }
    std::mt19937_64 rng(derive_seed(seed, 2));
    auto candidates = sample_without_replacement(data_->candidate_pool, cfg_.candidate_sample, rng);
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(number));
    Json d{{"user", user.value_or(static_cast<UserId>(number))}, {"arm", to_json(arm)}, {"seed", seed}, {"candidates", candidates}};
    return commit(id, "session_created", std::move(d));
  }

  StudySession get(const std::string& id) const {
    std::lock_guard lock(mu_);
    return find(id);
  }

  std::vector<StudySession> sessions() const {
    std::lock_guard lock(mu_);
    std::vector<StudySession> out;
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

  // Steps 1-2: at least `min_selection` distinct items from the listed candidates.
  StudySession submit_selection(const std::string& id, const std::vector<ItemId>& items) {
    std::lock_guard lock(mu_);
    const auto& s = at_step(id, Step::select);
    if (items.size() < cfg_.min_selection)
      throw StudyError(Rejection::invalid_count, "select at least " + std::to_string(cfg_.min_selection) + " movies (got " +
                                                     std::to_string(items.size()) + ")");
    std::set<ItemId> listed(s.candidates.begin(), s.candidates.end()), seen;
    for (auto item : items) {
      if (!listed.contains(item)) throw StudyError(Rejection::invalid_item, "item " + std::to_string(item) + " was not listed");
      if (!seen.insert(item).second) throw StudyError(Rejection::invalid_item, "item " + std::to_string(item) + " selected twice");
    }
    return commit(id, "selection_submitted", Json{{"items", items}});
  }

  // Step 3: one 1-5 star rating per selected item. Triggers training.
  StudySession submit_ratings(const std::string& id, const std::vector<std::pair<ItemId, int>>& ratings) {
    {
      std::lock_guard lock(mu_);
      const auto& s = at_step(id, Step::rate);
      if (ratings.size() != s.selected.size())
        throw StudyError(Rejection::invalid_count, "expected " + std::to_string(s.selected.size()) + " ratings, got " +
                                                       std::to_string(ratings.size()));
      std::set<ItemId> selected(s.selected.begin(), s.selected.end()), seen;
      Json rs = Json::array();
      for (const auto& [item, stars] : ratings) {
        if (!selected.contains(item) || !seen.insert(item).second)
          throw StudyError(Rejection::invalid_item, "rating for unselected or repeated item " + std::to_string(item));
        check_stars(stars);
        rs.push_back(Json{{"item", item}, {"stars", stars}});
      }
      auto snapshot = commit(id, "ratings_submitted", Json{{"ratings", std::move(rs)}});
      if (!cfg_.synchronous_training) return snapshot;
    }
    return complete_training(id);
  }

  // Trains the session's autoencoder and stores the top-N list. Runs outside
  // the engine lock; a no-op when the session already left the training step.
  StudySession complete_training(const std::string& id) {
    StudySession s;
    {
      std::lock_guard lock(mu_);
      s = find(id);
      if (s.step != Step::recommend) return s;
    }
    auto outcome = train_session(s);
    std::lock_guard lock(mu_);
    if (find(id).step != Step::recommend) return find(id);
    Json items = Json::array();
    for (const auto& r : outcome.recommendations.items) items.push_back(to_json(r));
    profiles_[id] = std::move(outcome.profile);
    return commit(id, "recommendations_computed", Json{{"items", std::move(items)}, {"final_loss", outcome.final_loss}});
  }

  // Step 4: ratings for every recommended item before any explanation. The
  // explanation for the top-2 is generated and stored with them.
  StudySession capture_pre_ratings(const std::string& id, const std::vector<int>& stars) {
    StudySession s;
    {
      std::lock_guard lock(mu_);
      s = at_step(id, Step::pre_rate);
      if (stars.size() != s.recommendations.size())
        throw StudyError(Rejection::invalid_count, "expected " + std::to_string(s.recommendations.size()) + " ratings, got " +
                                                       std::to_string(stars.size()));
      for (int v : stars) check_stars(v);
    }
    auto bundle = explain_session(s);
    std::lock_guard lock(mu_);
    at_step(id, Step::pre_rate);
    return commit(id, "pre_ratings_submitted", Json{{"ratings", stars}, {"explanation", to_json(bundle)}});
  }

  // Step 5: re-rating of the top-2 after reading the explanation.
  StudySession capture_post_explanation(const std::string& id, const std::vector<int>& stars) {
    std::lock_guard lock(mu_);
    at_step(id, Step::explain_rerate);
    check_top2(stars);
    return commit(id, "post_explanation_submitted", Json{{"ratings", stars}});
  }

  // Step 6: re-rating of the top-2 after the trailers.
  StudySession capture_post_trailer(const std::string& id, const std::vector<int>& stars) {
    std::lock_guard lock(mu_);
    at_step(id, Step::trailer_rerate);
    check_top2(stars);
    return commit(id, "post_trailer_submitted", Json{{"ratings", stars}});
  }

  // Step 7.
  StudySession submit_questionnaire(const std::string& id, const QuestionnaireInput& answers) {
    std::lock_guard lock(mu_);
    at_step(id, Step::questionnaire);
    if (!answers.transparency || !answers.trust || !answers.satisfaction) {
      std::string missing;
      if (!answers.transparency) missing += " transparency";
      if (!answers.trust) missing += " trust";
      if (!answers.satisfaction) missing += " satisfaction";
      throw StudyError(Rejection::incomplete, "questionnaire incomplete, missing:" + missing);
    }
    return commit(id, "questionnaire_submitted",
                  Json{{"transparency", *answers.transparency},
                       {"trust", *answers.trust},
                       {"satisfaction", to_string(*answers.satisfaction)}});
  }

 private:
  struct TrainOutcome {
    RecommendationList recommendations;
    UserProfile profile;
    double final_loss = 0.0;
  };

  TrainOutcome train_session(const StudySession& s) const {
    const auto& catalog = data_->catalog;
    RatingVector x(catalog.size());
    for (const auto& [item, stars] : s.initial_ratings) x.set_stars(catalog.require_row(item), stars);
    TrainConfig tc = cfg_.train;
    tc.seed = derive_seed(s.seed, 3);
    auto ae = init(data_->mask(s.arm.mode), tc);
    train(ae, x);
    auto recs = recommend(s.user, ae, x, catalog, cfg_.top_n);
    if (recs.items.size() < 2) throw StudyError(Rejection::unavailable, "fewer than two explainable items to recommend");
    return {std::move(recs), extract_profile(s.user, ae, x), ae.final_loss()};
  }

  ExplanationBundle explain_session(const StudySession& s) {
    std::optional<UserProfile> profile;
    {
      std::lock_guard lock(mu_);
      if (auto it = profiles_.find(s.id); it != profiles_.end()) profile = it->second;
    }
    if (!profile) profile = train_session(s).profile;  // not cached (e.g. after a restart); training is deterministic
    RecommendationList recs{s.user, s.recommendations, cfg_.top_n, s.recommendations.size() < cfg_.top_n};
    const auto projection = data_->projection(s.arm.mode);
    ExplainRequest req{s.arm.style, cfg_.k, derive_seed(s.seed, 4)};
    return explain_top2(req, recs, &*profile, data_->catalog, projection->mask, projection->space);
  }

  static void check_stars(int stars) {
    if (stars < 1 || stars > 5) throw StudyError(Rejection::out_of_scale, "rating " + std::to_string(stars) + " outside 1-5 stars");
  }

  static void check_top2(const std::vector<int>& stars) {
    if (stars.size() != 2) throw StudyError(Rejection::invalid_count, "expected 2 ratings, got " + std::to_string(stars.size()));
    for (int v : stars) check_stars(v);
  }

  const StudySession& find(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw StudyError(Rejection::not_found, "unknown session " + id);
    return it->second;
  }

  const StudySession& at_step(const std::string& id, Step expected) const {
    const auto& s = find(id);
    if (s.step != expected)
      throw StudyError(Rejection::wrong_step, "session " + id + " is at step " + std::string(to_string(s.step)) + ", not " +
                                                  std::string(to_string(expected)));
    return s;
  }

  // Caller holds mu_.
  StudySession commit(const std::string& id, std::string type, Json data) {
    auto event = store_.append(StudyEvent{0, id, std::move(type), clock_(), std::move(data)});
    apply_event(sessions_, event);
    if (event.type == "questionnaire_submitted") profiles_.erase(id);
    return sessions_.at(id);
  }

  std::shared_ptr<const StudyData> data_;
  StudyConfig cfg_;
  SessionStore& store_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, StudySession> sessions_;
  std::map<std::string, UserProfile> profiles_;
  std::uint64_t created_ = 0;
};

// ---------------------------------------------------------------------------
// Records for metrics
// ---------------------------------------------------------------------------

inline constexpr std::size_t kExplainedItems = 2;

struct ArmRecords {
  Arm arm;
  std::vector<RatingTriplet> triplets;
  std::vector<QuestionnaireAnswer> answers;
  std::size_t incomplete = 0;
};

// Per-arm records from completed sessions only. Configured arms come first in
// grid order, followed by any other arm present in the sessions.
inline std::vector<ArmRecords> collect_records(std::span<const StudySession> sessions, std::span<const Arm> grid) {
  std::vector<ArmRecords> out;
  std::map<Arm, std::size_t> index;
  auto slot = [&](const Arm& arm) -> ArmRecords& {
    auto [it, inserted] = index.try_emplace(arm, out.size());
    if (inserted) out.push_back({arm, {}, {}, 0});
    return out[it->second];
  };
  for (const auto& arm : grid) slot(arm);
  std::vector<const StudySession*> extra;
  for (const auto& s : sessions)
    if (!index.contains(s.arm)) extra.push_back(&s);
  std::sort(extra.begin(), extra.end(), [](auto* a, auto* b) { return a->arm < b->arm; });
  for (auto* s : extra) slot(s->arm);

  for (const auto& s : sessions) {
    auto& rec = slot(s.arm);
    if (s.step != Step::done) {
      ++rec.incomplete;
      continue;
    }
    for (std::size_t k = 0; k < kExplainedItems; ++k)
      rec.triplets.push_back({s.user, s.recommendations.at(k).item, static_cast<double>(s.pre_ratings.at(k)),
                              static_cast<double>(s.post_explanation_ratings.at(k)),
                              static_cast<double>(s.post_trailer_ratings.at(k))});
    rec.answers.push_back(*s.questionnaire);
  }
  return out;
}

}  // namespace semauto
