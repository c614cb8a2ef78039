#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "jitfb/domain.hpp"
#include "jitfb/error.hpp"

namespace jitfb {

enum class ParseErrorKind {
  NoJsonFound,
  MissingField,
  BadFieldType,
  EmptyField,
  BadLabel,
  ConfidenceOutOfRange,
  BadLevel,
};

std::string_view to_string(ParseErrorKind kind) noexcept;

class ResponseParseError : public Error {
 public:
  ResponseParseError(ParseErrorKind kind, std::string detail);
  ParseErrorKind kind() const noexcept { return kind_; }
  /// Field name or offending value, depending on kind.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ParseErrorKind kind_;
  std::string detail_;
};

enum class KnowledgeLevel { Novice, Advanced };

std::string_view to_string(KnowledgeLevel level) noexcept;

struct PosthocFeedback {
  std::string essay_evaluation;
  KnowledgeLevel inferred_level = KnowledgeLevel::Novice;
  std::string novice_feedback;
  std::string advanced_feedback;

  bool operator==(const PosthocFeedback&) const = default;
};

void to_json(nlohmann::json& j, const PosthocFeedback& v);
void from_json(const nlohmann::json& j, PosthocFeedback& v);

/// First balanced {...} in `raw` that parses as a JSON object. Surrounding
/// prose, code fences and trailing commas are tolerated.
std::optional<nlohmann::json> extract_first_object(std::string_view raw);

/// Feedback longer than this many words is accepted but logged.
inline constexpr std::size_t kFeedbackWarnWords = 80;

FeedbackResponse parse_jit_response(std::string_view raw);
PosthocFeedback parse_posthoc_response(std::string_view raw);

/// The four model-facing fields as a compact JSON object.
std::string render_jit_response(const FeedbackResponse& response);
std::string render_posthoc_response(const PosthocFeedback& feedback);

}  // namespace jitfb
