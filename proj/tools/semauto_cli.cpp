// semauto command-line driver: build, train, recommend, explain, simulate,
// report, serve.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "semauto/pipeline.hpp"
#include "semauto/service.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::stderr_color_mt("semauto");
  logger->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%^%l%$] %v");
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("SEMAUTO_LOG_LEVEL")) level = spdlog::level::from_str(env);
  logger->set_level(level);
  return logger;
}

semauto::LogSink sink_for(std::shared_ptr<spdlog::logger> logger) {
  return [logger](semauto::LogLevel level, const std::string& msg) {
    switch (level) {
      case semauto::LogLevel::debug: logger->debug(msg); break;
      case semauto::LogLevel::info: logger->info(msg); break;
      case semauto::LogLevel::warn: logger->warn(msg); break;
      case semauto::LogLevel::error: logger->error(msg); break;
    }
  };
}

// Manifest fields that can be overridden from the command line.
struct Overrides {
  std::string manifest;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> kg_mode;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> top_n;
  std::optional<std::size_t> k;
  std::optional<std::size_t> per_arm;
  std::optional<std::string> cohort;

  void attach(CLI::App* app) {
    app->add_option("-m,--manifest", manifest, "run manifest (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--seed", seed, "run seed");
    app->add_option("-j,--jobs", jobs, "parallel training jobs");
    app->add_option("--kg-mode", kg_mode, "semantic, factual or both");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--lr", learning_rate, "learning rate");
    app->add_option("-n,--top-n", top_n, "recommendation list length");
    app->add_option("-k", k, "features per explained item");
    app->add_option("--per-arm", per_arm, "simulated participants per arm");
    app->add_option("--cohort", cohort, "neutral or pro_personalized");
  }

  semauto::RunManifest load() const {
    auto m = semauto::load_manifest(manifest);
    if (output) m.output_dir = *output;
    if (seed) m.seed = *seed;
    if (jobs) m.jobs = *jobs;
    if (kg_mode) m.kg.mode = semauto::parse_kg_mode(*kg_mode);
    if (epochs) m.train.epochs = *epochs;
    if (learning_rate) m.train.learning_rate = *learning_rate;
    if (top_n) m.top_n = *top_n;
    if (k) m.k = *k;
    if (per_arm) m.per_arm = *per_arm;
    if (cohort) m.cohort = semauto::parse_cohort_model(*cohort);
    return m;
  }
};

std::vector<semauto::UserId> parse_users(const std::string& spec) {
  std::vector<semauto::UserId> out;
  if (spec == "all") return out;
  for (auto part : semauto::detail::split(spec, ',')) {
    auto id = semauto::detail::parse_number<semauto::UserId>(semauto::detail::trim(part));
    if (!id) throw semauto::ConfigError("bad user id '" + std::string(part) + "'");
    out.push_back(*id);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semauto: knowledge-graph autoencoder recommender with explanations"};
  app.set_version_flag("--version", std::string(SEMAUTO_VERSION));
  app.require_subcommand(1);

  Overrides ov;
  std::string users = "all";
  semauto::UserId user = 0;
  std::string style;
  std::optional<std::string> events;
  std::string host = "127.0.0.1";
  int port = 8080;

  auto* build = app.add_subcommand("build", "project the KG into the mask and feature index");
  auto* train = app.add_subcommand("train", "train one autoencoder per user");
  train->add_option("-u,--users", users, "comma-separated user ids or 'all'");
  auto* rec = app.add_subcommand("recommend", "top-N list for a trained user");
  rec->add_option("-u,--user", user, "user id")->required();
  auto* explain = app.add_subcommand("explain", "top-N list and top-2 explanation for a trained user");
  explain->add_option("-u,--user", user, "user id")->required();
  explain->add_option("-s,--style", style, "pointwise, pairwise, non_personalized or popularity")->required();
  auto* simulate = app.add_subcommand("simulate", "run a synthetic cohort and write its report");
  auto* report = app.add_subcommand("report", "metrics report from a study event log");
  report->add_option("--events", events, "event log (default: <output>/study/events.jsonl)");
  auto* serve = app.add_subcommand("serve", "serve the study protocol over HTTP");
  serve->add_option("--host", host, "bind address");
  serve->add_option("-p,--port", port, "port (0 picks a free one)");
  for (auto* sub : {build, train, rec, explain, simulate, report, serve}) ov.attach(sub);

  CLI11_PARSE(app, argc, argv);

  auto logger = make_logger();
  try {
    semauto::Pipeline pipeline{ov.load(), sink_for(logger)};

    if (build->parsed()) {
      std::cout << pipeline.build().line() << '\n';
    } else if (train->parsed()) {
      auto summary = pipeline.train_users(parse_users(users));
      std::cout << "trained=" << summary.trained << " skipped=" << summary.skipped << '\n';
    } else if (rec->parsed()) {
      semauto::write_recommendations(std::cout, pipeline.recommend_user(user));
    } else if (explain->parsed()) {
      auto result = pipeline.explain_user(user, semauto::parse_style(style));
      semauto::write_recommendations(std::cout, result.recommendations);
      std::cout << '\n' << result.bundle.rendered << '\n';
    } else if (simulate->parsed()) {
      std::cout << pipeline.simulate().dump(2) << '\n';
    } else if (report->parsed()) {
      std::optional<std::filesystem::path> source;
      if (events) source = *events;
      std::cout << pipeline.report(source).dump(2) << '\n';
    } else if (serve->parsed()) {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      semauto::serve_study(pipeline, host, port, g_stop, [&](int bound) {
        std::cout << "listening on " << host << ':' << bound << std::endl;
      });
    }
  } catch (const std::exception& e) {
    logger->error(e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
