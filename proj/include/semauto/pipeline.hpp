#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "semauto/autoencoder.hpp"
#include "semauto/data.hpp"
#include "semauto/explain.hpp"
#include "semauto/profile.hpp"
#include "semauto/report.hpp"
#include "semauto/serialize.hpp"
#include "semauto/simulate.hpp"
#include "semauto/study.hpp"

namespace semauto {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  fs::path triples;
  fs::path ratings;
  fs::path mapping;
  TripleFormat triples_format = TripleFormat::ntriples;
  KgConfig kg;
  TrainConfig train;
  std::size_t top_n = 5;
  std::size_t k = kDefaultK;
  std::vector<Style> styles{kAllStyles.begin(), kAllStyles.end()};
  std::vector<KgMode> modes{kAllKgModes.begin(), kAllKgModes.end()};
  fs::path output_dir = "out";
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  // study / simulation
  std::size_t per_arm = kMinSubjectsPerArm;
  CohortModel cohort = CohortModel::pro_personalized;
  std::size_t candidate_sample = 30;
  std::size_t min_selection = 15;

  std::vector<Arm> arms() const { return arm_grid(styles, modes); }

  StudyConfig study_config() const {
    StudyConfig c;
    c.arms = arms();
    c.candidate_sample = candidate_sample;
    c.min_selection = min_selection;
    c.top_n = top_n;
    c.k = k;
    c.train = train;
    c.seed = seed;
    return c;
  }

  void validate() const {
    auto check_path = [](const fs::path& p, const char* field) {
      if (p.empty()) throw ConfigError(std::string("manifest: missing field ") + field);
      if (!fs::is_regular_file(p)) throw ConfigError(std::string("manifest: ") + field + ": no such file: " + p.string());
    };
    check_path(triples, "paths.triples");
    check_path(ratings, "paths.ratings");
    check_path(mapping, "paths.mapping");
    if (output_dir.empty()) throw ConfigError("manifest: missing field output_dir");
    kg.validate();
    train.validate();
    if (top_n < 2) throw ConfigError("manifest: top_n must be at least 2");
    if (k == 0) throw ConfigError("manifest: k must be positive");
    if (styles.empty()) throw ConfigError("manifest: styles is empty");
    if (modes.empty()) throw ConfigError("manifest: modes is empty");
    if (jobs == 0) throw ConfigError("manifest: jobs must be positive");
    if (per_arm < 1) throw ConfigError("manifest: per_arm must be at least 1");
    study_config().validate();
  }
};

inline Json to_json(const RunManifest& m) {
  Json styles = Json::array(), modes = Json::array();
  for (auto s : m.styles) styles.push_back(to_string(s));
  for (auto md : m.modes) modes.push_back(to_string(md));
  return Json{{"paths", {{"triples", m.triples.string()}, {"ratings", m.ratings.string()}, {"mapping", m.mapping.string()}}},
              {"triples_format", to_string(m.triples_format)},
              {"kg",
               {{"mode", to_string(m.kg.mode)},
                {"categorical", m.kg.categorical_predicates},
                {"factual", m.kg.factual_predicates}}},
              {"train",
               {{"epochs", m.train.epochs},
                {"learning_rate", m.train.learning_rate},
                {"rated_only_loss", m.train.rated_only_loss}}},
              {"top_n", m.top_n},
              {"k", m.k},
              {"styles", std::move(styles)},
              {"modes", std::move(modes)},
              {"output_dir", m.output_dir.string()},
              {"seed", m.seed},
              {"jobs", m.jobs},
              {"study",
               {{"per_arm", m.per_arm},
                {"cohort", to_string(m.cohort)},
                {"candidate_sample", m.candidate_sample},
                {"min_selection", m.min_selection}}}};
}

// Relative paths are resolved against `base` (the manifest's directory).
inline RunManifest manifest_from_json(const Json& j, const fs::path& base = {}) {
  if (!j.is_object()) throw ConfigError("manifest: expected a JSON object");
  RunManifest m;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  };
  auto field = [](const Json& obj, const char* key) -> const Json* {
    auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
  };
  try {
    if (auto* paths = field(j, "paths")) {
      if (auto* p = field(*paths, "triples")) m.triples = resolve(p->get<std::string>());
      if (auto* p = field(*paths, "ratings")) m.ratings = resolve(p->get<std::string>());
      if (auto* p = field(*paths, "mapping")) m.mapping = resolve(p->get<std::string>());
    }
    if (auto* p = field(j, "triples_format")) m.triples_format = parse_triple_format(p->get<std::string>());
    if (auto* kg = field(j, "kg")) {
      if (auto* p = field(*kg, "mode")) m.kg.mode = parse_kg_mode(p->get<std::string>());
      if (auto* p = field(*kg, "categorical")) m.kg.categorical_predicates = p->get<std::set<std::string>>();
      if (auto* p = field(*kg, "factual")) m.kg.factual_predicates = p->get<std::set<std::string>>();
    }
    if (auto* t = field(j, "train")) {
      if (auto* p = field(*t, "epochs")) m.train.epochs = p->get<std::size_t>();
      if (auto* p = field(*t, "learning_rate")) m.train.learning_rate = p->get<double>();
      if (auto* p = field(*t, "rated_only_loss")) m.train.rated_only_loss = p->get<bool>();
    }
    if (auto* p = field(j, "top_n")) m.top_n = p->get<std::size_t>();
    if (auto* p = field(j, "k")) m.k = p->get<std::size_t>();
    if (auto* p = field(j, "styles")) {
      m.styles.clear();
      for (const auto& s : *p) m.styles.push_back(parse_style(s.get<std::string>()));
    }
    if (auto* p = field(j, "modes")) {
      m.modes.clear();
      for (const auto& s : *p) m.modes.push_back(parse_kg_mode(s.get<std::string>()));
    }
    if (auto* p = field(j, "output_dir")) m.output_dir = resolve(p->get<std::string>());
    if (auto* p = field(j, "seed")) m.seed = p->get<std::uint64_t>();
    if (auto* p = field(j, "jobs")) m.jobs = p->get<std::size_t>();
    if (auto* st = field(j, "study")) {
      if (auto* p = field(*st, "per_arm")) m.per_arm = p->get<std::size_t>();
      if (auto* p = field(*st, "cohort")) m.cohort = parse_cohort_model(p->get<std::string>());
      if (auto* p = field(*st, "candidate_sample")) m.candidate_sample = p->get<std::size_t>();
      if (auto* p = field(*st, "min_selection")) m.min_selection = p->get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("manifest " + path.string() + " is not valid JSON");
  return manifest_from_json(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

// Writes through a temporary file and renames, so a file either has its full
// content or does not exist.
inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json_file(const fs::path& path, const Json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

// Artifact locations under the output directory.
struct OutputLayout {
  fs::path root;
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path mask() const { return root / "mask.txt"; }
  fs::path features() const { return root / "features.tsv"; }
  fs::path model(UserId u) const { return root / "models" / (std::to_string(u) + ".model"); }
  fs::path profile(UserId u) const { return root / "profiles" / (std::to_string(u) + ".tsv"); }
  fs::path recommendations(UserId u) const { return root / "recommendations" / (std::to_string(u) + ".tsv"); }
  fs::path explanation(UserId u, Style s) const {
    return root / "explanations" / (std::to_string(u) + "-" + std::string(to_string(s)) + ".txt");
  }
  fs::path bundle(UserId u, Style s) const {
    return root / "explanations" / (std::to_string(u) + "-" + std::string(to_string(s)) + ".jsonl");
  }
  fs::path simulation_events() const { return root / "simulation" / "events.jsonl"; }
  fs::path simulation_report() const { return root / "simulation" / "report.json"; }
  fs::path study_events() const { return root / "study" / "events.jsonl"; }
  fs::path report() const { return root / "report.json"; }
};

enum class LogLevel { debug, info, warn, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Commands report progress through this; the CLI plugs in its logger.
struct Pipeline {
  RunManifest manifest;
  LogSink log = [](LogLevel, const std::string&) {};

  OutputLayout out() const { return {manifest.output_dir}; }

  void record_manifest() const { write_json_file(out().manifest(), to_json(manifest)); }

  // --- build -------------------------------------------------------------

  struct BuildSummary {
    std::size_t rows = 0, cols = 0, nnz = 0;
    std::string line() const {
      return "rows=" + std::to_string(rows) + " cols=" + std::to_string(cols) + " nnz=" + std::to_string(nnz);
    }
  };

  BuildSummary build() const {
    manifest.validate();
    record_manifest();
    const auto catalog = load_item_mapping(manifest.mapping.string());
    if (catalog.excluded()) log(LogLevel::warn, std::to_string(catalog.excluded()) + " mapping rows without an entity IRI excluded");
    const auto triples = load_triples(manifest.triples.string(), manifest.triples_format);
    const auto projection = build_feature_space(triples, catalog, manifest.kg);
    if (projection.literals_rejected)
      log(LogLevel::warn, std::to_string(projection.literals_rejected) + " literal objects on feature predicates ignored");
    const auto featureless = projection.mask.featureless_rows();
    if (!featureless.empty()) log(LogLevel::warn, std::to_string(featureless.size()) + " items have no features");
    write_file(out().mask(), [&](std::ostream& o) { write_mask(o, projection.mask); });
    write_file(out().features(), [&](std::ostream& o) { write_feature_index(o, projection.space); });
    BuildSummary s{projection.mask.rows(), projection.mask.cols(), projection.mask.nnz()};
    log(LogLevel::info, "build " + s.line() + " mode=" + std::string(to_string(manifest.kg.mode)));
    return s;
  }

  // --- shared state for train / recommend / explain ----------------------

  struct Workspace {
    Catalog catalog;
    std::shared_ptr<const MaskMatrix> mask;
    FeatureSpace space;
    RatingsTable ratings;
  };

  Workspace workspace() const {
    manifest.validate();
    const auto layout = out();
    if (!fs::exists(layout.mask()) || !fs::exists(layout.features()))
      throw ConfigError("build artifacts missing in " + layout.root.string() + " (run build first)");
    Workspace w;
    w.catalog = load_item_mapping(manifest.mapping.string());
    {
      std::ifstream in(layout.mask());
      w.mask = std::make_shared<const MaskMatrix>(read_mask(in));
    }
    {
      std::ifstream in(layout.features());
      w.space = read_feature_index(in);
    }
    if (w.mask->rows() != w.catalog.size() || w.mask->cols() != w.space.size())
      throw ConfigError("build artifacts do not match the catalog (rerun build)");
    w.ratings = load_ratings(manifest.ratings.string());
    return w;
  }

  std::vector<UserId> resolve_users(const Workspace& w, const std::vector<UserId>& requested) const {
    if (requested.empty()) return w.ratings.users();
    for (auto u : requested)
      if (!w.ratings.has_user(u)) throw ConfigError("unknown user " + std::to_string(u));
    return requested;
  }

  TrainConfig user_train_config(UserId u) const {
    TrainConfig c = manifest.train;
    c.seed = derive_seed(manifest.seed, static_cast<std::uint64_t>(u));
    return c;
  }

  // --- train --------------------------------------------------------------

  struct TrainSummary {
    std::size_t trained = 0;
    std::size_t skipped = 0;
  };

  // One model and one profile per user (empty `users` = all). Each user's seed
  // depends only on the run seed and the user id, so results do not depend on
  // the number of jobs.
  TrainSummary train_users(const std::vector<UserId>& users_requested = {}) const {
    auto w = workspace();
    record_manifest();
    const auto users = resolve_users(w, users_requested);
    log(LogLevel::info, "train config: " + describe(manifest.train) + " seed=" + std::to_string(manifest.seed) +
                            " jobs=" + std::to_string(manifest.jobs));

    std::atomic<std::size_t> next{0}, trained{0}, skipped{0};
    std::mutex err_mu, log_mu;
    std::exception_ptr failure;
    auto locked_log = [&](LogLevel level, const std::string& msg) {
      std::lock_guard lock(log_mu);
      log(level, msg);
    };
    auto worker = [&] {
      for (std::size_t t; (t = next++) < users.size();) {
        {
          std::lock_guard lock(err_mu);
          if (failure) return;
        }
        const UserId u = users[t];
        try {
          const auto x = rating_vector(w.catalog, w.ratings.of_user(u));
          if (x.rated().empty()) {
            locked_log(LogLevel::warn, "user " + std::to_string(u) + " has no ratings on catalog items; skipped");
            ++skipped;
            continue;
          }
          auto ae = init(w.mask, user_train_config(u));
          train(ae, x);
          const auto profile = extract_profile(u, ae, x);
          write_file(out().model(u), [&](std::ostream& o) { save_model(o, ae); });
          write_file(out().profile(u), [&](std::ostream& o) { write_profile(o, profile, w.space); });
          ++trained;
          std::ostringstream msg;
          msg << "user " << u << " trained: loss " << std::setprecision(6) << ae.loss_history().front() << " -> "
              << ae.final_loss();
          locked_log(LogLevel::debug, msg.str());
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const std::size_t threads = std::min(manifest.jobs, std::max<std::size_t>(users.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    TrainSummary s{trained.load(), skipped.load()};
    log(LogLevel::info, "trained " + std::to_string(s.trained) + " users, skipped " + std::to_string(s.skipped));
    return s;
  }

  // --- recommend / explain ------------------------------------------------

  struct UserState {
    UserAutoencoder ae;
    RatingVector x;
  };

  UserState load_user(const Workspace& w, UserId u) const {
    resolve_users(w, {u});
    const auto path = out().model(u);
    std::ifstream in(path);
    if (!in) throw ConfigError("no trained model for user " + std::to_string(u) + " (run train first)");
    return {load_model(in, w.mask), rating_vector(w.catalog, w.ratings.of_user(u))};
  }

  RecommendationList recommend_user(UserId u) const {
    auto w = workspace();
    record_manifest();
    auto st = load_user(w, u);
    auto recs = recommend(u, st.ae, st.x, w.catalog, manifest.top_n);
    if (recs.short_list)
      log(LogLevel::warn, "user " + std::to_string(u) + ": only " + std::to_string(recs.items.size()) + " items to recommend");
    write_file(out().recommendations(u), [&](std::ostream& o) { write_recommendations(o, recs); });
    return recs;
  }

  struct ExplainResult {
    RecommendationList recommendations;
    ExplanationBundle bundle;
  };

  ExplainResult explain_user(UserId u, Style style) const {
    auto w = workspace();
    record_manifest();
    auto st = load_user(w, u);
    auto recs = recommend(u, st.ae, st.x, w.catalog, manifest.top_n);
    const auto profile = extract_profile(u, st.ae, st.x);
    ExplainRequest req{style, manifest.k, derive_seed(manifest.seed, static_cast<std::uint64_t>(u) ^ 0x5eedULL)};
    auto bundle = explain_top2(req, recs, &profile, w.catalog, *w.mask, w.space);
    write_file(out().recommendations(u), [&](std::ostream& o) { write_recommendations(o, recs); });
    write_file(out().explanation(u, style), [&](std::ostream& o) { o << bundle.rendered << '\n'; });
    write_file(out().bundle(u, style), [&](std::ostream& o) { write_bundle_line(o, bundle); });
    return {std::move(recs), std::move(bundle)};
  }

  // --- study --------------------------------------------------------------

  std::shared_ptr<const StudyData> study_data() const {
    manifest.validate();
    auto catalog = load_item_mapping(manifest.mapping.string());
    const auto triples = load_triples(manifest.triples.string(), manifest.triples_format);
    const auto ratings = load_ratings(manifest.ratings.string());
    return make_study_data(std::move(catalog), triples, manifest.kg, manifest.modes, &ratings, manifest.candidate_sample);
  }

  // Runs the synthetic cohort with a logical clock and writes its event log
  // and metrics report.
  Json simulate() const {
    manifest.validate();
    record_manifest();
    auto data = study_data();
    SessionStore store;
    StudyEngine engine(data, manifest.study_config(), store, logical_clock());
    log(LogLevel::info, "simulate: " + std::to_string(manifest.per_arm) + " per arm over " +
                            std::to_string(manifest.arms().size()) + " arms, cohort=" + std::string(to_string(manifest.cohort)) +
                            ", train " + describe(manifest.train));
    const auto sessions = simulate_cohort(engine, manifest.per_arm, manifest.cohort);
    const auto arms = manifest.arms();
    auto report = build_report(std::span<const StudySession>(sessions), arms);
    write_file(out().simulation_events(), [&](std::ostream& o) { store.write(o); });
    write_json_file(out().simulation_report(), report);
    return report;
  }

  // Metrics report from an existing event log (default: the served study).
  Json report(std::optional<fs::path> events = std::nullopt, std::optional<fs::path> destination = std::nullopt) const {
    const fs::path source = events.value_or(out().study_events());
    std::ifstream in(source);
    if (!in)
      throw ConfigError("cannot open event log " + source.string() +
                        (events ? "" : " (run `serve` first, or pass --events <simulation/events.jsonl>)"));
    auto log_read = read_event_log(in);
    if (log_read.torn_lines) log(LogLevel::warn, "ignored a torn final record in " + source.string());
    const auto sessions_map = replay(log_read.events);
    std::vector<StudySession> sessions;
    for (const auto& [id, s] : sessions_map) sessions.push_back(s);
    const auto arms = manifest.arms();
    auto report = build_report(std::span<const StudySession>(sessions), arms);
    write_json_file(destination.value_or(out().report()), report);
    return report;
  }
};

}  // namespace semauto
