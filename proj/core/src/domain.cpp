#include "jitfb/domain.hpp"

#include <array>
#include <set>

#include "jitfb/error.hpp"

namespace jitfb {

using nlohmann::json;

const QuizOption* QuizProblem::find_option(std::string_view key) const noexcept {
  for (const auto& option : options) {
    if (option.key == key) return &option;
  }
  return nullptr;
}

void QuizProblem::validate() const {
  if (quiz_id.empty()) throw Error("quiz has an empty quiz_id");
  std::array<int, kLabelCount> uses{};
  std::set<std::string> keys;
  for (const auto& option : options) {
    if (!keys.insert(option.key).second) {
      throw Error("quiz " + quiz_id + ": duplicate option key '" + option.key + "'");
    }
    if (++uses[label_index(option.mapped_label)] > 1) {
      throw Error("quiz " + quiz_id + ": label '" + std::string(label_name(option.mapped_label)) +
                  "' mapped by more than one option");
    }
  }
  if (uses[label_index(ErrorLabel::Correct)] != 1) {
    throw Error("quiz " + quiz_id + ": exactly one option must map to 'correct'");
  }
  const auto* correct = find_option(correct_option);
  if (correct == nullptr || correct->mapped_label != ErrorLabel::Correct) {
    throw Error("quiz " + quiz_id + ": correct_option must name the option mapped to 'correct'");
  }
}

void to_json(json& j, const QuizOption& v) {
  j = {{"option_key", v.key}, {"option_text", v.text}, {"mapped_label", v.mapped_label}};
}

void from_json(const json& j, QuizOption& v) {
  v.key = j.at("option_key").get<std::string>();
  v.text = j.at("option_text").get<std::string>();
  v.mapped_label = j.at("mapped_label").get<ErrorLabel>();
}

void to_json(json& j, const QuizProblem& v) {
  j = {{"quiz_id", v.quiz_id},
       {"statement", v.statement},
       {"options", v.options},
       {"correct_option", v.correct_option}};
}

void from_json(const json& j, QuizProblem& v) {
  v.quiz_id = j.at("quiz_id").get<std::string>();
  v.statement = j.at("statement").get<std::string>();
  v.options = j.at("options").get<std::vector<QuizOption>>();
  v.correct_option = j.at("correct_option").get<std::string>();
}

void to_json(json& j, const FewShotExample& v) {
  j = {{"essay_text", v.essay_text}, {"label", v.label}, {"expert_feedback", v.expert_feedback}};
}

void from_json(const json& j, FewShotExample& v) {
  v.essay_text = j.at("essay_text").get<std::string>();
  v.label = j.at("label").get<ErrorLabel>();
  v.expert_feedback = j.at("expert_feedback").get<std::string>();
  if (v.essay_text.empty() || v.expert_feedback.empty()) {
    throw Error("few-shot example needs non-empty essay_text and expert_feedback");
  }
}

void to_json(json& j, const FeedbackResponse& v) {
  j = {{"classification", v.classification},
       {"confidence", v.confidence},
       {"secondary_classification", v.secondary_classification},
       {"feedback", v.feedback},
       {"degraded", v.degraded}};
}

void from_json(const json& j, FeedbackResponse& v) {
  v.classification = j.at("classification").get<ErrorLabel>();
  v.confidence = j.at("confidence").get<int>();
  v.secondary_classification = j.at("secondary_classification").get<ErrorLabel>();
  v.feedback = j.at("feedback").get<std::string>();
  v.degraded = j.value("degraded", false);
  if (v.confidence < 1 || v.confidence > 5) throw Error("confidence outside 1..5");
}

void to_json(json& j, const SurveyResponse& v) {
  j = {{"helpful", v.helpful}, {"reasons", v.reasons}};
  if (v.free_text) j["free_text"] = *v.free_text;
  if (v.cluster_label) j["cluster_label"] = *v.cluster_label;
}

void from_json(const json& j, SurveyResponse& v) {
  v.helpful = j.at("helpful").get<bool>();
  v.reasons = j.value("reasons", std::vector<std::string>{});
  v.free_text.reset();
  v.cluster_label.reset();
  if (j.contains("free_text") && !j["free_text"].is_null()) v.free_text = j["free_text"].get<std::string>();
  if (j.contains("cluster_label") && !j["cluster_label"].is_null()) {
    v.cluster_label = j["cluster_label"].get<int>();
  }
}

void to_json(json& j, const ConversationTurn& v) {
  j = {{"turn_index", v.turn_index}, {"essay", v.essay}, {"response", v.response}};
  if (v.latency_since_prev_s) j["latency_since_prev_s"] = *v.latency_since_prev_s;
}

void from_json(const json& j, ConversationTurn& v) {
  v.turn_index = j.at("turn_index").get<int>();
  v.essay = j.at("essay").get<StrategyEssay>();
  v.response = j.at("response").get<FeedbackResponse>();
  v.latency_since_prev_s.reset();
  if (j.contains("latency_since_prev_s") && !j["latency_since_prev_s"].is_null()) {
    v.latency_since_prev_s = j["latency_since_prev_s"].get<double>();
  }
}

void to_json(json& j, const Session& v) {
  j = {{"session_id", v.session_id},
       {"student_ref", v.student_ref},
       {"quiz_id", v.quiz_id},
       {"turns", v.turns}};
  if (v.final_answer) j["final_answer"] = *v.final_answer;
  if (v.answer_correct) j["answer_correct"] = *v.answer_correct;
  if (v.survey) j["survey"] = *v.survey;
}

void from_json(const json& j, Session& v) {
  v.session_id = j.at("session_id").get<std::string>();
  v.student_ref = j.at("student_ref").get<std::string>();
  v.quiz_id = j.at("quiz_id").get<std::string>();
  v.turns = j.value("turns", std::vector<ConversationTurn>{});
  v.final_answer.reset();
  v.answer_correct.reset();
  v.survey.reset();
  if (j.contains("final_answer")) v.final_answer = j["final_answer"].get<std::string>();
  if (j.contains("answer_correct")) v.answer_correct = j["answer_correct"].get<bool>();
  if (j.contains("survey")) v.survey = j["survey"].get<SurveyResponse>();
}

}  // namespace jitfb
