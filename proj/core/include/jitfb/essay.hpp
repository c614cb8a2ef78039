#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/error.hpp"

namespace jitfb {

/// UTC milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

inline constexpr std::size_t kMinEssayWords = 50;

/// Number of maximal runs of non-whitespace bytes. Whitespace is the ASCII
/// set (space, \t, \n, \v, \f, \r).
std::size_t word_count(std::string_view text) noexcept;

struct StrategyEssay {
  std::string text;
  std::size_t word_count = 0;
  TimestampMs submitted_at = 0;

  static StrategyEssay from_text(std::string text, TimestampMs submitted_at = 0);

  bool operator==(const StrategyEssay&) const = default;
};

class ValidatedEssay;

/// Throws EssayValidationError listing every violated rule.
ValidatedEssay validate_essay(std::string_view text, TimestampMs submitted_at = 0);

/// An essay that passed the course rules. Only obtainable via validate_essay.
class ValidatedEssay {
 public:
  const StrategyEssay& essay() const noexcept { return essay_; }
  const std::string& text() const noexcept { return essay_.text; }
  std::size_t word_count() const noexcept { return essay_.word_count; }

 private:
  explicit ValidatedEssay(StrategyEssay essay) : essay_(std::move(essay)) {}
  friend ValidatedEssay validate_essay(std::string_view, TimestampMs);

  StrategyEssay essay_;
};

struct TooShort {
  std::size_t word_count = 0;
  bool operator==(const TooShort&) const = default;
};

struct ContainsDigits {
  std::vector<std::size_t> positions;  // byte offsets into the text
  bool operator==(const ContainsDigits&) const = default;
};

struct ContainsSymbols {
  std::vector<std::string> characters;  // UTF-8, unique, first-seen order
  bool operator==(const ContainsSymbols&) const = default;
};

using EssayViolation = std::variant<TooShort, ContainsDigits, ContainsSymbols>;

std::string describe(const EssayViolation& violation);
nlohmann::json violation_to_json(const EssayViolation& violation);

class EssayValidationError : public Error {
 public:
  explicit EssayValidationError(std::vector<EssayViolation> violations);
  const std::vector<EssayViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<EssayViolation> violations_;
};

/// True for code points rejected as "numbers, symbols or formulae":
/// ASCII digits, = + * / ^ < >, U+2212 minus, summation, integral, square
/// root and Greek letters (basic, extended and mathematical alphanumeric).
bool is_forbidden_code_point(char32_t cp) noexcept;

/// Every violated rule, in the order TooShort, ContainsDigits,
/// ContainsSymbols. Empty when the text is acceptable.
std::vector<EssayViolation> essay_violations(std::string_view text);

std::int64_t word_count_delta(const StrategyEssay& prev, const StrategyEssay& next) noexcept;

void to_json(nlohmann::json& j, const StrategyEssay& essay);
void from_json(const nlohmann::json& j, StrategyEssay& essay);

}  // namespace jitfb
