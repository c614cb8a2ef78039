#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "jitfb/classifier.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/gateway.hpp"

namespace jitfb {

using QuizCatalog = std::map<std::string, QuizProblem, std::less<>>;

/// Reads a JSON array of quizzes (or a single quiz object) and validates each.
QuizCatalog load_quiz_catalog(const std::filesystem::path& path);

enum class ServiceErrorKind {
  UnknownQuiz,
  UnknownSession,
  SessionClosed,
  UnknownOption,
  AlreadyAnswered,
  NotAnswered,
  DuplicateSurvey,
  NotGenerated,
  DuplicateChoice,
  BadRequest,
};

std::string_view to_string(ServiceErrorKind kind) noexcept;
/// HTTP status used by the API for each kind.
int http_status(ServiceErrorKind kind) noexcept;

class ServiceError : public Error {
 public:
  ServiceError(ServiceErrorKind kind, const std::string& detail);
  ServiceErrorKind kind() const noexcept { return kind_; }

 private:
  ServiceErrorKind kind_;
};

/// The model could not produce post-hoc feedback (every attempt failed).
class PosthocUnavailableError : public Error {
 public:
  explicit PosthocUnavailableError(const std::string& detail) : Error("post-hoc generation failed: " + detail) {}
};

struct ServiceOptions {
  ClassificationStrategy strategy;
  RequestOptions request;
  /// UTC milliseconds; defaults to the system clock.
  std::function<TimestampMs()> clock;
  /// Fresh opaque session ids; defaults to 128 random bits in hex.
  std::function<std::string(std::string_view student_ref)> session_ids;
};

/// What a student sees for one essay submission.
struct SubmitResult {
  int turn_index = 0;
  std::string feedback;
  bool degraded = false;
};

struct PreferencePair {
  std::string assignment_id;
  std::string variant_a;
  std::string variant_b;
  std::uint64_t order_seed = 0;
  std::optional<Choice> chosen;
  std::vector<std::string> reasons;

  bool novice_first() const noexcept { return order_seed % 2 == 0; }

  bool operator==(const PreferencePair&) const = default;
};

/// Presentation-order seed for a (assignment, student) pair.
std::uint64_t preference_seed(std::string_view assignment_id, std::string_view student_ref) noexcept;

/// Session lifecycle on top of an EventLog. Every state change is appended
/// to the log before it is acknowledged, and construction replays whatever
/// the log already holds. Calls on one session are serialised; calls on
/// different sessions run concurrently.
class SessionService {
 public:
  SessionService(QuizCatalog quizzes, std::vector<FewShotExample> bank, std::shared_ptr<Gateway> gateway,
                 EventLog& log, ServiceOptions options = {});

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  std::string create_session(const std::string& student_ref, const std::string& quiz_id,
                             std::optional<TimestampMs> at = std::nullopt);

  /// Throws EssayValidationError, ServiceError or BusyError. A repeated
  /// client_key returns the turn already recorded under it.
  SubmitResult submit_essay(const std::string& session_id, std::string_view text,
                            std::optional<TimestampMs> at = std::nullopt,
                            std::optional<std::string> client_key = std::nullopt);

  bool record_answer(const std::string& session_id, const std::string& option_key,
                     std::optional<TimestampMs> at = std::nullopt);

  void record_survey(const std::string& session_id, SurveyResponse survey,
                     std::optional<TimestampMs> at = std::nullopt);

  void register_posthoc(const std::string& assignment_id, const std::string& student_ref,
                        PosthocFeedback feedback);

  /// Builds the post-hoc prompt, dispatches it and stores the parsed result.
  PosthocFeedback generate_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                   const std::string& quiz_id, std::string_view essay_text,
                                   std::string_view expert_rubric);

  PreferencePair get_preference_pair(const std::string& assignment_id, const std::string& student_ref) const;

  void record_preference(const std::string& assignment_id, const std::string& student_ref, Choice chosen,
                         std::vector<std::string> reasons);

  std::optional<Session> session(const std::string& session_id) const;
  std::vector<Session> sessions() const;

  const QuizCatalog& quizzes() const noexcept { return quizzes_; }
  const std::vector<FewShotExample>& bank() const noexcept { return bank_; }
  Gateway& gateway() noexcept { return *gateway_; }
  EventLog& log() noexcept { return log_; }

 private:
  struct SessionState {
    std::mutex mutex;
    Session session;
    std::map<std::string, int, std::less<>> client_keys;
  };

  struct PreferenceState {
    PosthocFeedback feedback;
    std::optional<PreferenceRecord> record;
  };

  std::shared_ptr<SessionState> find(const std::string& session_id) const;
  const QuizProblem& quiz(const std::string& quiz_id) const;
  TimestampMs now() const { return options_.clock(); }
  void restore();

  QuizCatalog quizzes_;
  std::vector<FewShotExample> bank_;
  std::shared_ptr<Gateway> gateway_;
  EventLog& log_;
  ServiceOptions options_;

  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::vector<std::string> session_order_;

  mutable std::mutex preference_mutex_;
  std::map<std::pair<std::string, std::string>, PreferenceState> preferences_;
};

}  // namespace jitfb
