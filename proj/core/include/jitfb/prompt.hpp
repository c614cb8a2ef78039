#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jitfb/domain.hpp"
#include "jitfb/error.hpp"

namespace jitfb {

enum class TemplateId { JiT, PostHoc };

struct PromptText {
  std::string text;
  TemplateId template_id = TemplateId::JiT;
  std::uint64_t content_hash = 0;

  static PromptText make(std::string text, TemplateId id);
  bool operator==(const PromptText&) const = default;
};

/// The raw template assets, placeholders intact.
std::string_view jit_template_source() noexcept;
std::string_view posthoc_template_source() noexcept;

/// Single-pass substitution of {{name}} markers. Substituted values are not
/// rescanned. Throws Error on a marker without a value.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct BankShortfall {
  ErrorLabel label;
  std::size_t have = 0;
  std::size_t need = 0;
  bool operator==(const BankShortfall&) const = default;
};

std::string describe(const BankShortfall& shortfall);

/// Per-label shortfalls of `bank` against `k_per_label`, in enum order.
std::vector<BankShortfall> bank_shortfalls(std::span<const FewShotExample> bank, std::size_t k_per_label);

class InsufficientBankError : public Error {
 public:
  explicit InsufficientBankError(std::vector<BankShortfall> shortfalls);
  const std::vector<BankShortfall>& shortfalls() const noexcept { return shortfalls_; }

 private:
  std::vector<BankShortfall> shortfalls_;
};

class EmptyRubricError : public Error {
 public:
  EmptyRubricError() : Error("EmptyRubric: expert rubric must be non-empty") {}
};

/// Statement followed by the option list, as inserted for {{quiz_problem}}.
std::string render_quiz_problem(const QuizProblem& problem);

/// First k examples of each label in bank order, grouped in label enum order.
std::vector<FewShotExample> select_examples(std::span<const FewShotExample> bank, std::size_t k_per_label);

/// Classification prompt. k_per_label == 0 is the zero-shot form. With
/// use_secondary == false the schema asks the model to repeat the primary
/// label in secondary_classification.
PromptText build_jit_prompt(const QuizProblem& problem, const ValidatedEssay& essay,
                            std::span<const FewShotExample> bank, std::size_t k_per_label,
                            bool use_secondary = true);

PromptText build_posthoc_prompt(const QuizProblem& problem, const ValidatedEssay& essay,
                                std::string_view expert_rubric);

/// Recovers the essay text embedded in a classification prompt, if any.
std::optional<std::string> extract_student_essay(std::string_view jit_prompt);

}  // namespace jitfb
