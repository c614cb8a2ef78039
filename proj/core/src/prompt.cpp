#include "jitfb/prompt.hpp"

#include <array>

#include "jitfb/hash.hpp"
#include "templates.hpp"

namespace jitfb {
namespace {

constexpr std::string_view kOpen = "{{";
constexpr std::string_view kClose = "}}";

constexpr std::string_view kExamplesHeader =
    "Few-Shot Examples\n"
    "[Examples of student's sample strategy essay, its error type, and feedback generated by "
    "human experts]\n";

constexpr std::string_view kSecondaryWithLabel = "What would be the second most likely label?";
constexpr std::string_view kSecondaryDisabled =
    "Repeat the value of classification here; do not consider a second label.";

std::string_view variant_name(ErrorLabel label) {
  switch (label) {
    case ErrorLabel::Correct: return "Correct";
    case ErrorLabel::Direction: return "Direction";
    case ErrorLabel::Position: return "Position";
    case ErrorLabel::PositionDirection: return "PositionDirection";
  }
  return "Correct";
}

std::string join_shortfalls(const std::vector<BankShortfall>& shortfalls) {
  std::string msg;
  for (const auto& s : shortfalls) {
    if (!msg.empty()) msg += "; ";
    msg += describe(s);
  }
  return msg;
}

std::string render_examples(std::span<const FewShotExample> examples) {
  if (examples.empty()) return {};
  std::string out = "\n";
  out += kExamplesHeader;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    out += "\nExample " + std::to_string(i + 1) + "\n";
    out += "Strategy Essay: " + ex.essay_text + "\n";
    out += "Error Type: " + std::string(label_name(ex.label)) + "\n";
    out += "Expert Feedback: " + ex.expert_feedback + "\n";
  }
  return out;
}

}  // namespace

PromptText PromptText::make(std::string text, TemplateId id) {
  PromptText p;
  p.content_hash = fnv1a64(text);
  p.text = std::move(text);
  p.template_id = id;
  return p;
}

std::string_view jit_template_source() noexcept { return detail::jit_template(); }
std::string_view posthoc_template_source() noexcept { return detail::posthoc_template(); }

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 1024);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find(kOpen, pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find(kClose, open + kOpen.size());
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + kOpen.size(), close - open - kOpen.size()));
    const auto it = values.find(name);
    if (it == values.end()) throw Error("template placeholder {{" + name + "}} has no value");
    out.append(it->second);
    pos = close + kClose.size();
  }
  return out;
}

std::string describe(const BankShortfall& shortfall) {
  return "InsufficientBank(" + std::string(variant_name(shortfall.label)) + ", " +
         std::to_string(shortfall.have) + ", " + std::to_string(shortfall.need) + ")";
}

std::vector<BankShortfall> bank_shortfalls(std::span<const FewShotExample> bank, std::size_t k_per_label) {
  std::array<std::size_t, kLabelCount> have{};
  for (const auto& ex : bank) ++have[label_index(ex.label)];
  std::vector<BankShortfall> out;
  for (auto label : kAllLabels) {
    if (have[label_index(label)] < k_per_label) out.push_back({label, have[label_index(label)], k_per_label});
  }
  return out;
}

InsufficientBankError::InsufficientBankError(std::vector<BankShortfall> shortfalls)
    : Error(join_shortfalls(shortfalls)), shortfalls_(std::move(shortfalls)) {}

std::string render_quiz_problem(const QuizProblem& problem) {
  std::string out = problem.statement;
  if (!problem.options.empty()) {
    out += "\nOptions:";
    for (const auto& option : problem.options) out += "\n" + option.key + ". " + option.text;
  }
  return out;
}

std::vector<FewShotExample> select_examples(std::span<const FewShotExample> bank, std::size_t k_per_label) {
  std::vector<FewShotExample> out;
  if (k_per_label == 0) return out;
  for (auto label : kAllLabels) {
    std::size_t taken = 0;
    for (const auto& ex : bank) {
      if (taken == k_per_label) break;
      if (ex.label == label) {
        out.push_back(ex);
        ++taken;
      }
    }
  }
  return out;
}

PromptText build_jit_prompt(const QuizProblem& problem, const ValidatedEssay& essay,
                            std::span<const FewShotExample> bank, std::size_t k_per_label,
                            bool use_secondary) {
  if (auto shortfalls = bank_shortfalls(bank, k_per_label); !shortfalls.empty()) {
    throw InsufficientBankError(std::move(shortfalls));
  }
  const auto examples = select_examples(bank, k_per_label);
  std::map<std::string, std::string> values{
      {"examples", render_examples(examples)},
      {"quiz_problem", render_quiz_problem(problem)},
      {"student_essay", essay.text()},
      {"secondary_classification",
       std::string(use_secondary ? kSecondaryWithLabel : kSecondaryDisabled)},
  };
  return PromptText::make(render_template(jit_template_source(), values), TemplateId::JiT);
}

PromptText build_posthoc_prompt(const QuizProblem& problem, const ValidatedEssay& essay,
                                std::string_view expert_rubric) {
  if (expert_rubric.empty()) throw EmptyRubricError();
  std::map<std::string, std::string> values{
      {"quiz_problem", render_quiz_problem(problem)},
      {"student_essay", essay.text()},
      {"expert_rubric", std::string(expert_rubric)},
  };
  return PromptText::make(render_template(posthoc_template_source(), values), TemplateId::PostHoc);
}

std::optional<std::string> extract_student_essay(std::string_view jit_prompt) {
  // Anchor on the literal template text around the essay marker: the text
  // between the previous placeholder and the marker, and the text after it up
  // to the next placeholder.
  static const auto anchors = [] {
    const auto tmpl = jit_template_source();
    const std::string marker = "{{student_essay}}";
    const auto at = tmpl.find(marker);
    const auto prev_close = tmpl.rfind(kClose, at);
    const auto lead_begin = prev_close == std::string_view::npos ? 0 : prev_close + kClose.size();
    const auto tail_begin = at + marker.size();
    const auto next_open = tmpl.find(kOpen, tail_begin);
    return std::pair<std::string, std::string>(
        std::string(tmpl.substr(lead_begin, at - lead_begin)),
        std::string(tmpl.substr(tail_begin, next_open - tail_begin)));
  }();
  const auto& [lead, tail] = anchors;
  const auto tail_at = jit_prompt.rfind(tail);
  if (tail_at == std::string_view::npos) return std::nullopt;
  const auto lead_at = jit_prompt.rfind(lead, tail_at);
  if (lead_at == std::string_view::npos) return std::nullopt;
  const auto begin = lead_at + lead.size();
  if (begin > tail_at) return std::nullopt;
  return std::string(jit_prompt.substr(begin, tail_at - begin));
}

}  // namespace jitfb
