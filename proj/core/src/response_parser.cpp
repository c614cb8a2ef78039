#include "jitfb/response_parser.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace jitfb {

using nlohmann::json;

namespace {

// Nesting beyond this is never a model answer and would only stress the
// recursive JSON parser.
constexpr int kMaxDepth = 64;

// End (inclusive) of the balanced object starting at `open`, skipping string
// contents. nullopt when unbalanced or too deep.
std::optional<std::size_t> match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{':
      case '[':
        if (++depth > kMaxDepth) return std::nullopt;
        break;
      case '}':
      case ']':
        if (--depth == 0) return c == '}' ? std::optional<std::size_t>(i) : std::nullopt;
        if (depth < 0) return std::nullopt;
        break;
      default: break;
    }
  }
  return std::nullopt;
}

// Drops commas that directly precede a closing brace or bracket.
std::string strip_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

std::optional<json> parse_object(std::string_view candidate) {
  auto parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) {
    parsed = json::parse(strip_trailing_commas(candidate), nullptr, false);
  }
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

const json& require(const json& obj, const char* field) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw ResponseParseError(ParseErrorKind::MissingField, field);
  return *it;
}

const std::string& require_string(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_string()) throw ResponseParseError(ParseErrorKind::BadFieldType, field);
  return v.get_ref<const std::string&>();
}

ErrorLabel require_label(const json& obj, const char* field) {
  const auto& name = require_string(obj, field);
  auto label = parse_label(name);
  if (!label) throw ResponseParseError(ParseErrorKind::BadLabel, name);
  return *label;
}

int require_confidence(const json& obj) {
  const auto& v = require(obj, "confidence");
  if (v.is_number_integer()) {
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u < 1 || u > 5) throw ResponseParseError(ParseErrorKind::ConfidenceOutOfRange, std::to_string(u));
      return static_cast<int>(u);
    }
    const auto i = v.get<std::int64_t>();
    if (i < 1 || i > 5) throw ResponseParseError(ParseErrorKind::ConfidenceOutOfRange, std::to_string(i));
    return static_cast<int>(i);
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (!std::isfinite(d) || d != std::floor(d)) {
      throw ResponseParseError(ParseErrorKind::BadFieldType, "confidence");
    }
    if (d < 1.0 || d > 5.0) throw ResponseParseError(ParseErrorKind::ConfidenceOutOfRange, v.dump());
    return static_cast<int>(d);
  }
  throw ResponseParseError(ParseErrorKind::BadFieldType, "confidence");
}

json require_object(std::string_view raw) {
  auto obj = extract_first_object(raw);
  if (!obj) throw ResponseParseError(ParseErrorKind::NoJsonFound, "");
  return std::move(*obj);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

std::string_view to_string(ParseErrorKind kind) noexcept {
  switch (kind) {
    case ParseErrorKind::NoJsonFound: return "NoJsonFound";
    case ParseErrorKind::MissingField: return "MissingField";
    case ParseErrorKind::BadFieldType: return "BadFieldType";
    case ParseErrorKind::EmptyField: return "EmptyField";
    case ParseErrorKind::BadLabel: return "BadLabel";
    case ParseErrorKind::ConfidenceOutOfRange: return "ConfidenceOutOfRange";
    case ParseErrorKind::BadLevel: return "BadLevel";
  }
  return "Unknown";
}

ResponseParseError::ResponseParseError(ParseErrorKind kind, std::string detail)
    : Error(std::string(to_string(kind)) + "(" + detail + ")"), kind_(kind), detail_(std::move(detail)) {}

std::string_view to_string(KnowledgeLevel level) noexcept {
  return level == KnowledgeLevel::Novice ? "Novice" : "Advanced";
}

void to_json(json& j, const PosthocFeedback& v) {
  j = {{"essay_evaluation", v.essay_evaluation},
       {"inferred_level", to_string(v.inferred_level)},
       {"novice_feedback", v.novice_feedback},
       {"advanced_feedback", v.advanced_feedback}};
}

void from_json(const json& j, PosthocFeedback& v) {
  v.essay_evaluation = j.at("essay_evaluation").get<std::string>();
  v.inferred_level =
      j.at("inferred_level").get<std::string>() == "Advanced" ? KnowledgeLevel::Advanced : KnowledgeLevel::Novice;
  v.novice_feedback = j.at("novice_feedback").get<std::string>();
  v.advanced_feedback = j.at("advanced_feedback").get<std::string>();
}

std::optional<json> extract_first_object(std::string_view raw) {
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto close = match_object(raw, open);
    if (!close) continue;
    if (auto obj = parse_object(raw.substr(open, *close - open + 1))) return obj;
  }
  return std::nullopt;
}

FeedbackResponse parse_jit_response(std::string_view raw) {
  const auto obj = require_object(raw);
  FeedbackResponse r;
  r.classification = require_label(obj, "classification");
  r.confidence = require_confidence(obj);
  r.secondary_classification = require_label(obj, "secondary_classification");
  r.feedback = require_string(obj, "feedback");
  if (r.feedback.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ResponseParseError(ParseErrorKind::EmptyField, "feedback");
  }
  r.degraded = false;
  if (const auto words = word_count(r.feedback); words > kFeedbackWarnWords) {
    spdlog::warn("model feedback has {} words (target is about 50)", words);
  }
  return r;
}

PosthocFeedback parse_posthoc_response(std::string_view raw) {
  const auto obj = require_object(raw);
  PosthocFeedback out;
  out.essay_evaluation = require_string(obj, "Essay_Evaluation");
  const auto& level = require_string(obj, "Inferred_Level");
  const auto folded = lowercase(level);
  if (folded == "novice") {
    out.inferred_level = KnowledgeLevel::Novice;
  } else if (folded == "advanced") {
    out.inferred_level = KnowledgeLevel::Advanced;
  } else {
    throw ResponseParseError(ParseErrorKind::BadLevel, level);
  }
  const auto& feedback = require(obj, "Feedback");
  if (!feedback.is_object()) throw ResponseParseError(ParseErrorKind::BadFieldType, "Feedback");
  const auto nested = [&](const char* key, const char* path) -> std::string {
    const auto it = feedback.find(key);
    if (it == feedback.end() || it->is_null()) throw ResponseParseError(ParseErrorKind::MissingField, path);
    if (!it->is_string()) throw ResponseParseError(ParseErrorKind::BadFieldType, path);
    auto text = it->get<std::string>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw ResponseParseError(ParseErrorKind::EmptyField, path);
    }
    return text;
  };
  out.novice_feedback = nested("Novice", "Feedback.Novice");
  out.advanced_feedback = nested("Advanced", "Feedback.Advanced");
  return out;
}

std::string render_jit_response(const FeedbackResponse& response) {
  // Field order mirrors the prompt's output schema.
  nlohmann::ordered_json j;
  j["classification"] = std::string(label_name(response.classification));
  j["confidence"] = response.confidence;
  j["secondary_classification"] = std::string(label_name(response.secondary_classification));
  j["feedback"] = response.feedback;
  return j.dump();
}

std::string render_posthoc_response(const PosthocFeedback& feedback) {
  nlohmann::ordered_json j;
  j["Essay_Evaluation"] = feedback.essay_evaluation;
  j["Inferred_Level"] = std::string(to_string(feedback.inferred_level));
  j["Feedback"]["Novice"] = feedback.novice_feedback;
  j["Feedback"]["Advanced"] = feedback.advanced_feedback;
  return j.dump();
}

}  // namespace jitfb
