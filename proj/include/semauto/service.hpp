#pragma once

#include <sys/socket.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "semauto/pipeline.hpp"
#include "semauto/report.hpp"
#include "semauto/study.hpp"

#ifndef SEMAUTO_VERSION
#define SEMAUTO_VERSION "dev"
#endif

namespace semauto {

// JSON-over-HTTP front end of a StudyEngine. Training after Step 3 runs on a
// background worker; clients poll the session (step `recommend`, training=true)
// until the recommendations are available.
class StudyService {
 public:
  StudyService(StudyEngine& engine, LogSink log = [](LogLevel, const std::string&) {})
      : engine_(engine), log_(std::move(log)) {
    // Plain SO_REUSEADDR: a port held by a live listener must fail to bind
    // (httplib's default SO_REUSEPORT would silently share it).
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
    worker_ = std::thread([this] { training_loop(); });
    // Sessions left mid-training by a previous run are picked up again.
    for (const auto& s : engine_.sessions())
      if (s.step == Step::recommend) enqueue(s.id);
  }

  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  ~StudyService() { shutdown(); }

  // Binds; port 0 picks a free port. Returns the bound port or throws.
  int bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
      if (bound < 0) throw Error("cannot bind " + host + ":0");
    } else if (!server_.bind_to_port(host, port)) {
      throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    return bound;
  }

  // Serves until stop(); returns after in-flight requests finish.
  void run() { server_.listen_after_bind(); }

  void stop() { server_.stop(); }

  void wait_until_ready() { server_.wait_until_ready(); }

  // Stops the training worker. Queued jobs are dropped; their sessions stay at
  // `recommend` in the log and resume on the next start.
  void shutdown() {
    {
      std::lock_guard lock(queue_mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  httplib::Server& server() { return server_; }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  // --- training worker --------------------------------------------------

  void enqueue(const std::string& id) {
    {
      std::lock_guard lock(queue_mu_);
      queue_.push_back(id);
    }
    queue_cv_.notify_one();
  }

  void training_loop() {
    while (true) {
      std::string id;
      {
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        id = queue_.front();
        queue_.pop_front();
      }
      try {
        engine_.complete_training(id);
        log_(LogLevel::debug, "session " + id + " trained");
      } catch (const std::exception& e) {
        std::lock_guard lock(queue_mu_);
        training_errors_[id] = e.what();
        log_(LogLevel::error, "session " + id + " training failed: " + e.what());
      }
    }
  }

  std::optional<std::string> training_error(const std::string& id) {
    std::lock_guard lock(queue_mu_);
    auto it = training_errors_.find(id);
    if (it == training_errors_.end()) return std::nullopt;
    return it->second;
  }

  // --- responses ----------------------------------------------------------

  static Json envelope(const std::optional<StudySession>& s) {
    Json j{{"schema_version", kSchemaVersion}};
    j["session_id"] = s ? Json(s->id) : Json(nullptr);
    j["step"] = s ? Json(to_string(s->step)) : Json(nullptr);
    return j;
  }

  Json item_json(ItemId id) const {
    const auto& catalog = engine_.data().catalog;
    const auto& item = catalog[catalog.require_row(id)];
    Json j{{"item", item.id}, {"title", item.title}};
    j["trailer_url"] = item.trailer_url.empty() ? Json(nullptr) : Json(item.trailer_url);
    return j;
  }

  Json session_view(const StudySession& s) {
    Json j = envelope(s);
    j["training"] = s.step == Step::recommend;
    if (auto err = training_error(s.id)) j["training_error"] = *err;
    j["arm"] = to_json(s.arm);
    Json candidates = Json::array();
    for (auto id : s.candidates) candidates.push_back(item_json(id));
    j["candidates"] = std::move(candidates);
    j["min_selection"] = engine_.config().min_selection;
    j["session"] = to_json(s);
    return j;
  }

  Json recommendations_view(const StudySession& s) {
    Json j = envelope(s);
    j["training"] = s.step == Step::recommend;
    Json items = Json::array();
    for (const auto& r : s.recommendations) {
      auto it = item_json(r.item);
      it["score"] = r.score;
      items.push_back(std::move(it));
    }
    j["recommendations"] = std::move(items);
    return j;
  }

  static void send(Res& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static int status_of(Rejection r) {
    switch (r) {
      case Rejection::not_found: return 404;
      case Rejection::wrong_step: return 409;
      case Rejection::unavailable: return 503;
      default: return 422;
    }
  }

  void send_error(Res& res, int status, std::string_view code, const std::string& message,
                  const std::optional<std::string>& id = std::nullopt) {
    std::optional<StudySession> s;
    if (id) try {
        s = engine_.get(*id);
      } catch (const StudyError&) {
      }
    Json j = envelope(s);
    if (!s && id) j["session_id"] = *id;
    j["error"] = Json{{"code", code}, {"message", message}};
    send(res, status, j);
  }

  // Parses the body and runs `fn`, mapping failures to 4xx responses.
  void handle(const Req& req, Res& res, std::optional<std::string> id, const std::function<void(const Json&)>& fn) {
    Json body = Json::object();
    if (!req.body.empty()) {
      body = Json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return send_error(res, 400, "bad_request", "request body is not valid JSON", id);
    }
    try {
      fn(body);
    } catch (const StudyError& e) {
      send_error(res, status_of(e.reason()), to_string(e.reason()), e.what(), id);
    } catch (const ConfigError& e) {
      send_error(res, 422, "invalid", e.what(), id);
    } catch (const Json::exception& e) {
      send_error(res, 400, "bad_request", std::string("malformed request: ") + e.what(), id);
    } catch (const std::exception& e) {
      log_(LogLevel::error, std::string("request failed: ") + e.what());
      send_error(res, 500, "internal", e.what(), id);
    }
  }

  static std::vector<int> star_list(const Json& body) {
    const auto& arr = body.at("ratings");
    if (!arr.is_array()) throw StudyError(Rejection::invalid_count, "ratings must be an array");
    std::vector<int> out;
    for (const auto& v : arr) {
      if (!v.is_number_integer()) throw StudyError(Rejection::out_of_scale, "ratings must be whole stars 1-5");
      const auto stars = v.get<std::int64_t>();
      if (stars < 1 || stars > 5) throw StudyError(Rejection::out_of_scale, "rating " + std::to_string(stars) + " outside 1-5 stars");
      out.push_back(static_cast<int>(stars));
    }
    return out;
  }

  static std::optional<bool> agreement(const Json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (it->is_boolean()) return it->get<bool>();
    const auto s = it->get<std::string>();
    if (s == "agree" || s == "yes") return true;
    if (s == "disagree" || s == "no") return false;
    throw StudyError(Rejection::out_of_scale, std::string(key) + ": expected agree or disagree");
  }

  void routes() {
    server_.Get("/health", [this](const Req&, Res& res) {
      Json j = envelope(std::nullopt);
      j["status"] = "ok";
      j["version"] = SEMAUTO_VERSION;
      j["catalog_size"] = engine_.data().catalog.size();
      send(res, 200, j);
    });

    server_.Post("/sessions", [this](const Req& req, Res& res) {
      handle(req, res, std::nullopt, [&](const Json& body) {
        std::optional<Arm> arm;
        std::optional<UserId> user;
        if (body.contains("arm") && !body["arm"].is_null()) arm = arm_from_json(body["arm"]);
        if (body.contains("user") && !body["user"].is_null()) user = body["user"].get<UserId>();
        auto s = engine_.create_session(arm, user);
        log_(LogLevel::info, "session " + s.id + " created, arm " + s.arm.label());
        send(res, 201, session_view(s));
      });
    });

    server_.Get(R"(/sessions/([^/]+))", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json&) { send(res, 200, session_view(engine_.get(id))); });
    });

    server_.Post(R"(/sessions/([^/]+)/selection)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json& body) {
        send(res, 200, session_view(engine_.submit_selection(id, body.at("items").get<std::vector<ItemId>>())));
      });
    });

    server_.Post(R"(/sessions/([^/]+)/ratings)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json& body) {
        std::vector<std::pair<ItemId, int>> ratings;
        for (const auto& r : body.at("ratings")) {
          const auto& stars = r.at("stars");
          if (!stars.is_number_integer() || stars.get<std::int64_t>() < 1 || stars.get<std::int64_t>() > 5)
            throw StudyError(Rejection::out_of_scale, "ratings must be whole stars 1-5");
          ratings.emplace_back(r.at("item").get<ItemId>(), stars.get<int>());
        }
        auto s = engine_.submit_ratings(id, ratings);
        if (s.step == Step::recommend) enqueue(id);
        send(res, 202, session_view(s));
      });
    });

    server_.Get(R"(/sessions/([^/]+)/recommendations)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json&) {
        auto s = engine_.get(id);
        if (s.step < Step::recommend) throw StudyError(Rejection::wrong_step, "ratings have not been submitted yet");
        send(res, s.step == Step::recommend ? 202 : 200, recommendations_view(s));
      });
    });

    server_.Post(R"(/sessions/([^/]+)/pre-ratings)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json& body) {
        auto s = engine_.capture_pre_ratings(id, star_list(body));
        Json j = envelope(s);
        j["explanation"] = to_json(*s.explanation);
        j["items"] = Json::array({item_json(s.recommendations[0].item), item_json(s.recommendations[1].item)});
        send(res, 200, j);
      });
    });

    server_.Post(R"(/sessions/([^/]+)/post-explanation-ratings)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id,
             [&](const Json& body) { send(res, 200, session_view(engine_.capture_post_explanation(id, star_list(body)))); });
    });

    server_.Post(R"(/sessions/([^/]+)/post-trailer-ratings)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id,
             [&](const Json& body) { send(res, 200, session_view(engine_.capture_post_trailer(id, star_list(body)))); });
    });

    server_.Post(R"(/sessions/([^/]+)/questionnaire)", [this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      handle(req, res, id, [&](const Json& body) {
        QuestionnaireInput q;
        q.transparency = agreement(body, "transparency");
        q.trust = agreement(body, "trust");
        if (body.contains("satisfaction") && !body["satisfaction"].is_null()) {
          try {
            q.satisfaction = parse_satisfaction(body["satisfaction"].get<std::string>());
          } catch (const ConfigError& e) {
            throw StudyError(Rejection::out_of_scale, e.what());
          }
        }
        auto s = engine_.submit_questionnaire(id, q);
        log_(LogLevel::info, "session " + id + " completed");
        send(res, 200, session_view(s));
      });
    });

    server_.Get("/report", [this](const Req& req, Res& res) {
      handle(req, res, std::nullopt, [&](const Json&) {
        const auto sessions = engine_.sessions();
        Json j = envelope(std::nullopt);
        j["report"] = build_report(std::span<const StudySession>(sessions), engine_.config().arms);
        send(res, 200, j);
      });
    });
  }

  StudyEngine& engine_;
  LogSink log_;
  httplib::Server server_;
  std::thread worker_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::string> queue_;
  std::map<std::string, std::string> training_errors_;
  bool stopping_ = false;
};

// The `serve` command: loads the study inputs, appends to the study event log
// under the output directory and serves until `stop_requested` turns true.
// `on_ready` receives the bound port.
inline void serve_study(const Pipeline& pipeline, const std::string& host, int port, std::atomic<bool>& stop_requested,
                        const std::function<void(int)>& on_ready = {}) {
  pipeline.manifest.validate();
  pipeline.record_manifest();
  auto data = pipeline.study_data();
  const auto events = pipeline.out().study_events();
  fs::create_directories(events.parent_path());
  SessionStore store(events);
  if (store.recovered_torn_lines()) pipeline.log(LogLevel::warn, "dropped a torn final record from " + events.string());
  auto config = pipeline.manifest.study_config();
  config.synchronous_training = false;
  StudyEngine engine(data, config, store);
  StudyService service(engine, pipeline.log);
  const int bound = service.bind(host, port);
  pipeline.log(LogLevel::info, "study service on " + host + ":" + std::to_string(bound) + ", " +
                                   std::to_string(data->catalog.size()) + " items, " + std::to_string(config.arms.size()) +
                                   " arms, log " + events.string());
  std::thread watcher([&] {
    while (!stop_requested.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    service.stop();
  });
  std::thread server_thread([&] { service.run(); });
  service.wait_until_ready();
  if (on_ready) on_ready(bound);
  server_thread.join();
  stop_requested.store(true);  // releases the watcher if the server ended on its own
  watcher.join();
  service.shutdown();
  store.flush();
  pipeline.log(LogLevel::info, "study service stopped; " + std::to_string(store.size()) + " events in log");
}

}  // namespace semauto
