#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jitfb/backends.hpp"
#include "jitfb/classifier.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/session_service.hpp"

namespace jitfb {

using LabelMatrix = std::array<std::array<double, kLabelCount>, kLabelCount>;

/// Observed turn-to-turn label dynamics, rows/columns in ErrorLabel order.
inline constexpr LabelMatrix kObservedRevisionDynamics = {{
    {0.6797, 0.1250, 0.1328, 0.0625},  // from correct
    {0.5278, 0.2917, 0.1250, 0.0556},  // from direction
    {0.3491, 0.1415, 0.3585, 0.1509},  // from position
    {0.3750, 0.0781, 0.2969, 0.2500},  // from position-direction
}};

struct LatencyModel {
  double base_s = 75.0;
  double jitter_s = 45.0;
};

struct SimConfig {
  std::uint64_t n_students = 1000;
  std::array<double, kLabelCount> initial_label_dist = {0.43, 0.21, 0.21, 0.15};
  LabelMatrix revision_dynamics = kObservedRevisionDynamics;
  /// Probability of asking for a second turn after the first.
  double p_continue = 0.2;
  /// Probability of each further turn; defaults to p_continue.
  std::optional<double> p_continue_later;
  int max_turns = 14;
  LatencyModel latency;
  /// Mean change in essay words for a from -> to revision.
  LabelMatrix word_delta = {{
      {4, 2, 2, 1},
      {14, 4, 3, 2},
      {14, 3, 4, 2},
      {18, 8, 8, 3},
  }};
  double word_delta_jitter = 3.0;
  std::uint64_t seed = 1;
  int parallelism = 4;
  std::string quiz_id;  // empty: the first quiz in the catalog
  double p_survey = 1.0;
  double p_helpful = 0.78;
  /// Fraction of students who also get post-hoc feedback and a preference pair.
  double p_preference = 0.0;
  std::string assignment_id = "assignment-1";
  TimestampMs start_ms = 1767225600000;  // 2026-01-01T00:00:00Z

  /// Checks ranges and renormalises the distributions in place.
  void validate();
};

/// Phrases that make an essay read as having the given error.
const std::vector<std::string>& sim_essay_cores(ErrorLabel label);

/// Label whose core phrasing the essay contains, if any.
std::optional<ErrorLabel> sim_essay_label(std::string_view essay);

/// A rule-abiding essay with the label's phrasing and exactly target_words
/// words (or the core's length, if larger).
std::string synthesize_essay(ErrorLabel label, std::size_t target_words, std::uint64_t variant);

/// Feedback written for a label without naming it.
std::string sim_feedback(ErrorLabel label);

/// Scripted backend that classifies simulator essays by their hidden label
/// and answers post-hoc prompts with fixed novice/advanced texts.
std::shared_ptr<ScriptedBackend> make_sim_backend(std::string id = "sim");

/// What the simulator drives: the in-process service or a remote API.
class SimTarget {
 public:
  virtual ~SimTarget() = default;
  virtual std::string create_session(const std::string& student_ref, const std::string& quiz_id, TimestampMs at) = 0;
  virtual SubmitResult submit_essay(const std::string& session_id, const std::string& text, TimestampMs at) = 0;
  virtual void record_answer(const std::string& session_id, const std::string& option_key, TimestampMs at) = 0;
  virtual void record_survey(const std::string& session_id, const SurveyResponse& survey, TimestampMs at) = 0;
  virtual void generate_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                const std::string& quiz_id, const std::string& essay) = 0;
  virtual PreferencePair get_preference_pair(const std::string& assignment_id, const std::string& student_ref) = 0;
  virtual void record_preference(const std::string& assignment_id, const std::string& student_ref, Choice chosen,
                                 const std::vector<std::string>& reasons) = 0;
};

class ServiceSimTarget : public SimTarget {
 public:
  explicit ServiceSimTarget(SessionService& service) : service_(service) {}
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
  SessionService& service_;
};

class ServiceUnavailableError : public Error {
 public:
  explicit ServiceUnavailableError(const std::string& detail) : Error("ServiceUnavailable: " + detail) {}
};

struct SimSummary {
  std::uint64_t students = 0;
  std::uint64_t turns = 0;
  std::uint64_t degraded_turns = 0;
  std::uint64_t busy_retries = 0;
  std::uint64_t preferences = 0;
  std::uint64_t posthoc_failures = 0;  // students whose post-hoc feedback could not be generated
};

/// Deterministic student id and session id for student i.
std::string sim_student_ref(std::uint64_t i);
std::string sim_session_id(std::string_view student_ref);

/// Drives every simulated student through the target. All randomness comes
/// from config.seed; per-student order is preserved under parallelism.
SimSummary simulate_cohort(const SimConfig& config, const QuizProblem& quiz, SimTarget& target);

struct SimRun {
  std::vector<Event> events;  // canonical order
  SimSummary summary;
};

/// Runs the cohort against an in-memory service backed by backend (the sim
/// backend when null) and returns the resulting log in canonical order.
SimRun simulate_in_process(const SimConfig& config, const QuizCatalog& quizzes, std::vector<FewShotExample> bank,
                           const GatewayConfig& gateway = {}, const ClassificationStrategy& strategy = {},
                           std::shared_ptr<CompletionBackend> backend = nullptr);

}  // namespace jitfb
