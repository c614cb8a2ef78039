#include "jitfb/http_api.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <thread>

#include <httplib.h>
#include <openssl/crypto.h>
#include <spdlog/spdlog.h>

#include "jitfb/analytics.hpp"
#include "jitfb/hash.hpp"
#include "jitfb/response_parser.hpp"

namespace jitfb {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxBody = 1 << 20;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw ServiceError(ServiceErrorKind::BadRequest, "request body must be a JSON object");
  }
  return body;
}

std::string required_string(const json& body, const char* field) {
  const auto it = body.find(field);
  if (it == body.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw ServiceError(ServiceErrorKind::BadRequest, std::string("missing string field '") + field + "'");
  }
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& body, const char* field) {
  std::vector<std::string> out;
  const auto it = body.find(field);
  if (it == body.end()) return out;
  if (!it->is_array()) throw ServiceError(ServiceErrorKind::BadRequest, std::string(field) + " must be a list");
  for (const auto& v : *it) {
    if (!v.is_string()) throw ServiceError(ServiceErrorKind::BadRequest, std::string(field) + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string_view variant_name(Choice c) { return c == Choice::A ? "variant_a" : "variant_b"; }

bool contains_word(std::string_view text, std::string_view word, bool case_insensitive) {
  const auto lower = [](unsigned char c) { return static_cast<char>(std::tolower(c)); };
  const auto is_word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '-'; };
  std::string hay(text);
  std::string needle(word);
  if (case_insensitive) {
    std::transform(hay.begin(), hay.end(), hay.begin(), lower);
    std::transform(needle.begin(), needle.end(), needle.begin(), lower);
  }
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) {
    const bool left = at == 0 || !is_word(static_cast<unsigned char>(hay[at - 1]));
    const auto end = at + needle.size();
    const bool right = end >= hay.size() || !is_word(static_cast<unsigned char>(hay[end]));
    if (left && right) return true;
  }
  return false;
}

void scan(const json& v, const QuizProblem& quiz, const std::string& where, std::vector<std::string>& out) {
  if (v.is_object()) {
    for (const auto& [key, child] : v.items()) {
      const auto& hidden = hidden_response_keys();
      if (std::find(hidden.begin(), hidden.end(), key) != hidden.end()) out.push_back(where + "." + key + ": hidden key");
      scan(child, quiz, where + "." + key, out);
    }
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) scan(v[i], quiz, where + "[" + std::to_string(i) + "]", out);
  } else if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    for (auto label : kAllLabels) {
      if (contains_word(s, label_name(label), true)) out.push_back(where + ": mentions " + std::string(label_name(label)));
    }
    if (s == quiz.correct_option || contains_word(s, quiz.correct_option, false)) {
      out.push_back(where + ": mentions the correct option");
    }
  }
}

}  // namespace

const std::vector<std::string>& hidden_response_keys() {
  static const std::vector<std::string> keys = {
      "classification", "secondary_classification", "confidence", "correct_option",
      "label",          "mapped_label",             "answer_label", "order_seed",
  };
  return keys;
}

std::vector<std::string> information_leaks(const json& body, const QuizProblem& quiz) {
  std::vector<std::string> out;
  scan(body, quiz, "$", out);
  return out;
}

struct HttpApi::Impl {
  SessionService& service;
  HttpApiOptions options;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> port{0};
  std::mutex lifecycle;

  Impl(SessionService& s, HttpApiOptions o) : service(s), options(std::move(o)) {}

  std::string student(std::string_view raw) const {
    return options.anonymization_key.empty() ? std::string(raw) : anonymize_student(raw, options.anonymization_key);
  }

  bool authorised(const httplib::Request& req, httplib::Response& res) const {
    if (options.admin_token.empty()) {
      send_error(res, 403, "Forbidden", "admin routes are disabled");
      return false;
    }
    const auto header = req.get_header_value("Authorization");
    const std::string expected = "Bearer " + options.admin_token;
    if (header.size() != expected.size() || CRYPTO_memcmp(header.data(), expected.data(), header.size()) != 0) {
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return false;
    }
    return true;
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const EssayValidationError& e) {
      json details = json::array();
      for (const auto& v : e.violations()) details.push_back(violation_to_json(v));
      send_json(res, 422, {{"error", "ValidationFailed"}, {"message", e.what()}, {"details", details}});
    } catch (const ServiceError& e) {
      send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
    } catch (const BusyError& e) {
      res.set_header("Retry-After", "1");
      send_error(res, 429, "Busy", "too many requests in flight, retry shortly");
    } catch (const PosthocUnavailableError& e) {
      send_error(res, 503, "ModelUnavailable", e.what());
    } catch (const AnalyticsError& e) {
      send_error(res, 404, "EmptyLog", e.what());
    } catch (const ResponseParseError& e) {
      send_error(res, 502, "BadModelOutput", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "BadRequest", e.what());
    } catch (const std::exception& e) {
      spdlog::error("request failed: {}", e.what());
      send_error(res, 500, "Internal", "internal error");
    }
  }

  void routes() {
    server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        const auto id = service.create_session(student(required_string(body, "student_id")),
                                               required_string(body, "quiz_id"));
        send_json(res, 200, {{"session_id", id}});
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        std::optional<std::string> key;
        if (req.has_header("Idempotency-Key")) key = req.get_header_value("Idempotency-Key");
        const auto essay = body.find("essay");
        if (essay == body.end() || !essay->is_string()) {
          throw ServiceError(ServiceErrorKind::BadRequest, "missing string field 'essay'");
        }
        const auto r = service.submit_essay(req.matches[1], essay->get_ref<const std::string&>(), std::nullopt, key);
        send_json(res, 200, {{"turn_index", r.turn_index}, {"feedback", r.feedback}, {"degraded", r.degraded}});
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        const bool correct = service.record_answer(req.matches[1], required_string(body, "option_key"));
        send_json(res, 200, {{"answer_correct", correct}});
      });
    });

    server.Post(R"(/api/sessions/([^/]+)/survey)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        const auto helpful = body.find("helpful");
        if (helpful == body.end() || !helpful->is_boolean()) {
          throw ServiceError(ServiceErrorKind::BadRequest, "missing boolean field 'helpful'");
        }
        SurveyResponse survey;
        survey.helpful = helpful->get<bool>();
        survey.reasons = string_list(body, "reasons");
        if (const auto ft = body.find("free_text"); ft != body.end() && ft->is_string()) {
          survey.free_text = ft->get<std::string>();
        }
        service.record_survey(req.matches[1], std::move(survey));
        send_json(res, 200, {{"ok", true}});
      });
    });

    server.Get(R"(/api/preference/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto raw = req.get_param_value("student_id");
        if (raw.empty()) throw ServiceError(ServiceErrorKind::BadRequest, "missing query parameter 'student_id'");
        const auto pair = service.get_preference_pair(req.matches[1], student(raw));
        json out = {{"assignment_id", pair.assignment_id},
                    {"variant_a", pair.variant_a},
                    {"variant_b", pair.variant_b},
                    {"chosen", nullptr},
                    {"reasons", pair.reasons}};
        if (pair.chosen) out["chosen"] = variant_name(*pair.chosen);
        send_json(res, 200, out);
      });
    });

    server.Post(R"(/api/preference/([^/]+)/choice)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = parse_body(req);
        const auto chosen = parse_choice(required_string(body, "chosen"));
        if (!chosen) throw ServiceError(ServiceErrorKind::BadRequest, "chosen must be A or B");
        service.record_preference(req.matches[1], student(required_string(body, "student_id")), *chosen,
                                  string_list(body, "reasons"));
        send_json(res, 200, {{"ok", true}});
      });
    });

    server.Post("/api/admin/posthoc", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorised(req, res)) return;
      guarded(res, [&] {
        const auto body = parse_body(req);
        const auto fb = service.generate_posthoc(
            required_string(body, "assignment_id"), student(required_string(body, "student_id")),
            required_string(body, "quiz_id"), required_string(body, "essay"), required_string(body, "rubric"));
        send_json(res, 200, fb);
      });
    });

    server.Get(R"(/api/admin/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorised(req, res)) return;
      guarded(res, [&] {
        const auto s = service.session(req.matches[1]);
        if (!s) throw ServiceError(ServiceErrorKind::UnknownSession, req.matches[1]);
        send_json(res, 200, *s);
      });
    });

    server.Get("/api/admin/report", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorised(req, res)) return;
      guarded(res, [&] {
        const auto events = service.log().snapshot();
        const auto report = build_report(std::span<const Event>(events));
        if (req.get_param_value("format") == "text") {
          res.status = 200;
          res.set_content(render_report_text(report), "text/plain; charset=utf-8");
        } else {
          res.status = 200;
          res.set_content(render_report_json(report), "application/json");
        }
      });
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });
  }
};

HttpApi::HttpApi(SessionService& service, HttpApiOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  if (impl_->options.threads < 1) throw Error("http api needs at least one thread");
  if (impl_->options.anonymization_key.empty()) spdlog::warn("no anonymization key: student ids are stored as given");
  const auto threads = static_cast<std::size_t>(impl_->options.threads);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->server.set_payload_max_length(kMaxBody);
  impl_->routes();
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::start() {
  std::lock_guard lock(impl_->lifecycle);
  if (impl_->thread.joinable()) return impl_->port;
  auto& server = impl_->server;
  const auto& host = impl_->options.host;
  int port = impl_->options.port;
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) throw Error("cannot bind " + host + ":" + std::to_string(impl_->options.port));
  impl_->port = port;
  impl_->thread = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return port;
}

void HttpApi::wait() {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void HttpApi::stop() {
  std::lock_guard lock(impl_->lifecycle);
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpApi::port() const noexcept { return impl_->port; }

std::string HttpApi::student_ref(std::string_view raw_student_id) const { return impl_->student(raw_student_id); }

HttpSimTarget::HttpSimTarget(std::string host, int port, std::string admin_token, Observer observer)
    : host_(std::move(host)), port_(port), admin_token_(std::move(admin_token)), observer_(std::move(observer)) {}

HttpSimTarget::~HttpSimTarget() = default;

json HttpSimTarget::call(const std::string& method, const std::string& route, const std::string& path,
                         const json* body, const std::string& idempotency_key, bool admin) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(30, 0);
  client.set_read_timeout(300, 0);
  httplib::Headers headers;
  if (!idempotency_key.empty()) headers.emplace("Idempotency-Key", idempotency_key);
  if (admin) headers.emplace("Authorization", "Bearer " + admin_token_);
  const auto result = method == "GET" ? client.Get(path, headers)
                                      : client.Post(path, headers, body ? body->dump() : "{}", "application/json");
  if (!result) throw ServiceUnavailableError(route + ": " + httplib::to_string(result.error()));
  if (observer_) observer_(route, result->status, result->body);
  if (result->status == 429) throw BusyError();
  if (result->status == 503) throw ServiceUnavailableError(route + ": " + result->body);
  auto parsed = json::parse(result->body, nullptr, false);
  if (result->status != 200) throw Error(route + " -> " + std::to_string(result->status) + ": " + result->body);
  if (parsed.is_discarded()) throw Error(route + ": response is not JSON");
  return parsed;
}

std::string HttpSimTarget::create_session(const std::string& student_ref, const std::string& quiz_id, TimestampMs) {
  const json body = {{"student_id", student_ref}, {"quiz_id", quiz_id}};
  return call("POST", "create_session", "/api/sessions", &body).at("session_id").get<std::string>();
}

SubmitResult HttpSimTarget::submit_essay(const std::string& session_id, const std::string& text, TimestampMs) {
  const json body = {{"essay", text}};
  const auto key = to_hex(stable_hash({session_id, text}));
  const auto r = call("POST", "feedback", "/api/sessions/" + session_id + "/feedback", &body, key);
  return {r.at("turn_index").get<int>(), r.at("feedback").get<std::string>(), r.at("degraded").get<bool>()};
}

void HttpSimTarget::record_answer(const std::string& session_id, const std::string& option_key, TimestampMs) {
  const json body = {{"option_key", option_key}};
  call("POST", "answer", "/api/sessions/" + session_id + "/answer", &body);
}

void HttpSimTarget::record_survey(const std::string& session_id, const SurveyResponse& survey, TimestampMs) {
  json body = {{"helpful", survey.helpful}, {"reasons", survey.reasons}};
  if (survey.free_text) body["free_text"] = *survey.free_text;
  call("POST", "survey", "/api/sessions/" + session_id + "/survey", &body);
}

void HttpSimTarget::generate_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                     const std::string& quiz_id, const std::string& essay) {
  const json body = {{"assignment_id", assignment_id},
                     {"student_id", student_ref},
                     {"quiz_id", quiz_id},
                     {"essay", essay},
                     {"rubric", "Name the body whose mass matters and the sense of the force."}};
  call("POST", "admin_posthoc", "/api/admin/posthoc", &body, {}, true);
}

PreferencePair HttpSimTarget::get_preference_pair(const std::string& assignment_id, const std::string& student_ref) {
  const auto r = call("GET", "preference",
                      "/api/preference/" + assignment_id + "?student_id=" + httplib::detail::encode_query_param(student_ref),
                      nullptr);
  PreferencePair pair;
  pair.assignment_id = r.at("assignment_id").get<std::string>();
  pair.variant_a = r.at("variant_a").get<std::string>();
  pair.variant_b = r.at("variant_b").get<std::string>();
  pair.reasons = r.at("reasons").get<std::vector<std::string>>();
  return pair;
}

void HttpSimTarget::record_preference(const std::string& assignment_id, const std::string& student_ref,
                                      Choice chosen, const std::vector<std::string>& reasons) {
  const json body = {{"student_id", student_ref}, {"chosen", to_string(chosen)}, {"reasons", reasons}};
  call("POST", "preference_choice", "/api/preference/" + assignment_id + "/choice", &body);
}

}  // namespace jitfb
