#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/essay.hpp"
#include "jitfb/label.hpp"

namespace jitfb {

struct QuizOption {
  std::string key;
  std::string text;
  ErrorLabel mapped_label = ErrorLabel::Correct;

  bool operator==(const QuizOption&) const = default;
};

struct QuizProblem {
  std::string quiz_id;
  std::string statement;
  std::vector<QuizOption> options;
  std::string correct_option;

  const QuizOption* find_option(std::string_view key) const noexcept;

  /// Throws Error unless exactly one option maps to Correct, it is
  /// correct_option, no label is used twice and keys are unique.
  void validate() const;

  bool operator==(const QuizProblem&) const = default;
};

struct FewShotExample {
  std::string essay_text;
  ErrorLabel label = ErrorLabel::Correct;
  std::string expert_feedback;

  bool operator==(const FewShotExample&) const = default;
};

struct FeedbackResponse {
  ErrorLabel classification = ErrorLabel::Correct;
  int confidence = 1;
  ErrorLabel secondary_classification = ErrorLabel::Correct;
  std::string feedback;
  bool degraded = false;

  bool operator==(const FeedbackResponse&) const = default;
};

struct SurveyResponse {
  bool helpful = false;
  std::vector<std::string> reasons;
  std::optional<std::string> free_text;
  std::optional<int> cluster_label;

  bool operator==(const SurveyResponse&) const = default;
};

struct ConversationTurn {
  int turn_index = 1;
  StrategyEssay essay;
  FeedbackResponse response;
  std::optional<double> latency_since_prev_s;

  bool operator==(const ConversationTurn&) const = default;
};

struct Session {
  std::string session_id;
  std::string student_ref;
  std::string quiz_id;
  std::vector<ConversationTurn> turns;
  std::optional<std::string> final_answer;
  std::optional<bool> answer_correct;
  std::optional<SurveyResponse> survey;

  bool conversational() const noexcept { return turns.size() >= 2; }

  bool operator==(const Session&) const = default;
};

void to_json(nlohmann::json& j, const QuizOption& v);
void from_json(const nlohmann::json& j, QuizOption& v);
void to_json(nlohmann::json& j, const QuizProblem& v);
void from_json(const nlohmann::json& j, QuizProblem& v);
void to_json(nlohmann::json& j, const FewShotExample& v);
void from_json(const nlohmann::json& j, FewShotExample& v);
void to_json(nlohmann::json& j, const FeedbackResponse& v);
void from_json(const nlohmann::json& j, FeedbackResponse& v);
void to_json(nlohmann::json& j, const SurveyResponse& v);
void from_json(const nlohmann::json& j, SurveyResponse& v);
void to_json(nlohmann::json& j, const ConversationTurn& v);
void from_json(const nlohmann::json& j, ConversationTurn& v);
void to_json(nlohmann::json& j, const Session& v);
void from_json(const nlohmann::json& j, Session& v);

}  // namespace jitfb
