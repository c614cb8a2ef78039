#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/session_service.hpp"
#include "jitfb/student_sim.hpp"

namespace jitfb {

struct HttpApiOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds an ephemeral port
  int threads = 64;
  /// Admin routes answer 403 while this is empty.
  std::string admin_token;
  /// HMAC key for student ids; raw ids are stored when empty.
  std::string anonymization_key;
};

/// JSON/HTTP front end for a SessionService.
///
///   POST /api/sessions                          {student_id, quiz_id} -> {session_id}
///   POST /api/sessions/{id}/feedback            {essay} [Idempotency-Key] -> {turn_index, feedback, degraded}
///   POST /api/sessions/{id}/answer              {option_key} -> {answer_correct}
///   POST /api/sessions/{id}/survey              {helpful, reasons, free_text?}
///   GET  /api/preference/{assignment}?student_id=
///   POST /api/preference/{assignment}/choice    {student_id, chosen: "A"|"B", reasons}
///   POST /api/admin/posthoc                     {assignment_id, student_id, quiz_id, essay, rubric}
///   GET  /api/admin/sessions/{id}
///   GET  /api/admin/report[?format=text]
///   GET  /healthz
class HttpApi {
 public:
  HttpApi(SessionService& service, HttpApiOptions options);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds and starts serving on a background thread; returns the port.
  int start();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();
  int port() const noexcept;

  std::string student_ref(std::string_view raw_student_id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Response keys that must never reach a student.
const std::vector<std::string>& hidden_response_keys();

/// Everything in a student-facing JSON body that would reveal a label, a
/// confidence or the correct option. Empty when the body is clean.
std::vector<std::string> information_leaks(const nlohmann::json& body, const QuizProblem& quiz);

/// Drives a running HttpApi over the network, for end-to-end simulation.
class HttpSimTarget : public SimTarget {
 public:
  using Observer = std::function<void(std::string_view route, int status, std::string_view body)>;

  HttpSimTarget(std::string host, int port, std::string admin_token = {}, Observer observer = {});
  ~HttpSimTarget() override;

  std::string create_session(const std::string& student_ref, const std::string& quiz_id, TimestampMs at) override;
  SubmitResult submit_essay(const std::string& session_id, const std::string& text, TimestampMs at) override;
  void record_answer(const std::string& session_id, const std::string& option_key, TimestampMs at) override;
  void record_survey(const std::string& session_id, const SurveyResponse& survey, TimestampMs at) override;
  void generate_posthoc(const std::string& assignment_id, const std::string& student_ref, const std::string& quiz_id,
                        const std::string& essay) override;
  PreferencePair get_preference_pair(const std::string& assignment_id, const std::string& student_ref) override;
  void record_preference(const std::string& assignment_id, const std::string& student_ref, Choice chosen,
                         const std::vector<std::string>& reasons) override;

 private:
  nlohmann::json call(const std::string& method, const std::string& route, const std::string& path,
                      const nlohmann::json* body, const std::string& idempotency_key = {}, bool admin = false);

  std::string host_;
  int port_;
  std::string admin_token_;
  Observer observer_;
};

}  // namespace jitfb
