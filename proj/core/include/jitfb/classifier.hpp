#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/domain.hpp"
#include "jitfb/gateway.hpp"

namespace jitfb {

enum class StrategyMode { ZeroShot, FewShot };

struct ClassificationStrategy {
  StrategyMode mode = StrategyMode::FewShot;
  std::size_t k_per_label = 3;
  bool use_secondary = true;

  static ClassificationStrategy zero_shot(bool use_secondary);
  static ClassificationStrategy few_shot(std::size_t k_per_label, bool use_secondary);

  /// Throws Error when ZeroShot carries a non-zero k.
  void validate() const;
  /// Row label as printed in evaluation tables, e.g. "Few-shot LLM w/ Secondary".
  std::string display_name() const;

  bool operator==(const ClassificationStrategy&) const = default;
};

/// The gateway refused the request because its queue is full.
class BusyError : public Error {
 public:
  BusyError() : Error("Busy: completion queue is full") {}
};

/// Conservative reply used whenever the model path fails: flags both the
/// object and the sense of the force for reflection.
FeedbackResponse fallback_feedback();

struct RequestOptions {
  std::string idempotency_key;
  int max_tokens = 512;
  double temperature = 0.0;
  double timeout_s = 30.0;
};

/// Prompt, dispatch and parse. A reply that fails to parse is re-asked
/// once; a second failure or a Degraded gateway outcome yields
/// fallback_feedback(). Busy on the first dispatch throws BusyError.
FeedbackResponse classify(const ValidatedEssay& essay, const QuizProblem& problem,
                          std::span<const FewShotExample> bank, const ClassificationStrategy& strategy,
                          Gateway& gateway, const RequestOptions& options = {});

class EmptyBankError : public Error {
 public:
  EmptyBankError() : Error("EmptyBank: the few-shot bank has no examples") {}
};

/// Lowercased tokens with ASCII punctuation removed.
std::vector<std::string> lexical_tokens(std::string_view text);

/// Label of the nearest bank example by cosine similarity of L2-normalised
/// term-frequency vectors. Ties go to the earliest label in enum order.
ErrorLabel classify_lexical_baseline(const ValidatedEssay& essay, std::span<const FewShotExample> bank);

struct ConfusionMatrix {
  // counts[gold][predicted]
  std::array<std::array<std::uint64_t, kLabelCount>, kLabelCount> counts{};

  void add(ErrorLabel gold, ErrorLabel predicted) noexcept {
    ++counts[label_index(gold)][label_index(predicted)];
  }
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;

  bool operator==(const ConfusionMatrix&) const = default;
};

/// trace / total; 0 for an empty matrix.
double accuracy(const ConfusionMatrix& cm) noexcept;

/// Unweighted mean of per-class F1, with F1 = 0 for classes whose
/// precision or recall is 0/0.
double macro_f1(const ConfusionMatrix& cm) noexcept;

struct LabeledItem {
  std::string essay_text;
  ErrorLabel gold_label = ErrorLabel::Correct;
};

struct LabeledDataset {
  std::vector<LabeledItem> items;
};

struct EvalReport {
  std::string method;
  double accuracy_mean = 0.0;
  double accuracy_halfrange = 0.0;
  double macro_f1_mean = 0.0;
  double macro_f1_halfrange = 0.0;
  int trials = 0;
  std::vector<ConfusionMatrix> per_trial_confusions;
  std::uint64_t degraded_responses = 0;
};

/// Mean and half-range of per-trial accuracy and macro F1.
EvalReport summarize_trials(std::string method, std::vector<ConfusionMatrix> per_trial);

/// Runs classify over every item once per trial. Trial t uses gateways[t].
/// Classification fans out over up to max_in_flight worker threads.
EvalReport evaluate(const LabeledDataset& dataset, const QuizProblem& problem,
                    const ClassificationStrategy& strategy, std::span<const FewShotExample> bank,
                    std::span<Gateway* const> gateways);

EvalReport evaluate(const LabeledDataset& dataset, const QuizProblem& problem,
                    const ClassificationStrategy& strategy, std::span<const FewShotExample> bank,
                    Gateway& gateway, int trials);

EvalReport evaluate_lexical_baseline(const LabeledDataset& dataset, std::span<const FewShotExample> bank);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const ConfusionMatrix& cm);

/// Aligned plain-text table: Method / Accuracy / Macro F1, accuracy and F1
/// in percent, half-ranges as fractions.
std::string render_eval_table(std::span<const EvalReport> reports);

/// JSONL {"essay", "label"} per line.
LabeledDataset load_dataset_jsonl(const std::filesystem::path& path);
/// One bank line {"essay", "label", "feedback"}; throws Error on bad input.
FewShotExample parse_bank_line(std::string_view line);

/// JSONL {"essay", "label", "feedback"} per line.
std::vector<FewShotExample> load_bank_jsonl(const std::filesystem::path& path);

}  // namespace jitfb
