#include "jitfb/essay.hpp"

#include <algorithm>

namespace jitfb {
namespace {

constexpr bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

struct Decoded {
  char32_t cp;
  std::size_t length;
};

// Lenient UTF-8 decode of one code point; malformed bytes decode as U+FFFD
// with length 1.
Decoded decode_utf8(std::string_view s, std::size_t i) noexcept {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (i + len > s.size()) return {0xFFFD, 1};
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

}  // namespace

std::size_t word_count(std::string_view text) noexcept {
  std::size_t count = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = is_space(static_cast<unsigned char>(ch));
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

StrategyEssay StrategyEssay::from_text(std::string text, TimestampMs submitted_at) {
  StrategyEssay essay;
  essay.word_count = jitfb::word_count(text);
  essay.text = std::move(text);
  essay.submitted_at = submitted_at;
  return essay;
}

bool is_forbidden_code_point(char32_t cp) noexcept {
  switch (cp) {
    case U'=': case U'+': case U'*': case U'/': case U'^': case U'<': case U'>':
    case U'−':  // minus sign
    case U'∑':  // n-ary summation
    case U'∫':  // integral
    case U'√':  // square root
      return true;
    default:
      break;
  }
  if (cp >= U'0' && cp <= U'9') return true;
  if (cp >= 0x0370 && cp <= 0x03FF) return true;    // Greek and Coptic
  if (cp >= 0x1F00 && cp <= 0x1FFF) return true;    // Greek Extended
  if (cp >= 0x1D6A8 && cp <= 0x1D7CB) return true;  // mathematical Greek
  return false;
}

std::vector<EssayViolation> essay_violations(std::string_view text) {
  std::vector<EssayViolation> out;
  const auto words = word_count(text);
  if (words < kMinEssayWords) out.emplace_back(TooShort{words});

  ContainsDigits digits;
  ContainsSymbols symbols;
  for (std::size_t i = 0; i < text.size();) {
    const auto [cp, len] = decode_utf8(text, i);
    if (cp >= U'0' && cp <= U'9') {
      digits.positions.push_back(i);
    } else if (is_forbidden_code_point(cp)) {
      std::string ch(text.substr(i, len));
      if (std::find(symbols.characters.begin(), symbols.characters.end(), ch) ==
          symbols.characters.end()) {
        symbols.characters.push_back(std::move(ch));
      }
    }
    i += len;
  }
  if (!digits.positions.empty()) out.emplace_back(std::move(digits));
  if (!symbols.characters.empty()) out.emplace_back(std::move(symbols));
  return out;
}

std::string describe(const EssayViolation& violation) {
  struct Visitor {
    std::string operator()(const TooShort& v) const {
      return "TooShort(" + std::to_string(v.word_count) + ")";
    }
    std::string operator()(const ContainsDigits& v) const {
      std::string s = "ContainsDigits(";
      for (std::size_t i = 0; i < v.positions.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v.positions[i]);
      }
      return s + ")";
    }
    std::string operator()(const ContainsSymbols& v) const {
      std::string s = "ContainsSymbols(";
      for (std::size_t i = 0; i < v.characters.size(); ++i) {
        if (i) s += ",";
        s += v.characters[i];
      }
      return s + ")";
    }
  };
  return std::visit(Visitor{}, violation);
}

nlohmann::json violation_to_json(const EssayViolation& violation) {
  struct Visitor {
    nlohmann::json operator()(const TooShort& v) const {
      return {{"rule", "TooShort"}, {"word_count", v.word_count}, {"min_words", kMinEssayWords}};
    }
    nlohmann::json operator()(const ContainsDigits& v) const {
      return {{"rule", "ContainsDigits"}, {"positions", v.positions}};
    }
    nlohmann::json operator()(const ContainsSymbols& v) const {
      return {{"rule", "ContainsSymbols"}, {"characters", v.characters}};
    }
  };
  return std::visit(Visitor{}, violation);
}

namespace {
std::string join_violations(const std::vector<EssayViolation>& violations) {
  std::string msg = "essay rejected:";
  for (const auto& v : violations) msg += " " + describe(v);
  return msg;
}
}  // namespace

EssayValidationError::EssayValidationError(std::vector<EssayViolation> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

ValidatedEssay validate_essay(std::string_view text, TimestampMs submitted_at) {
  auto violations = essay_violations(text);
  if (!violations.empty()) throw EssayValidationError(std::move(violations));
  return ValidatedEssay(StrategyEssay::from_text(std::string(text), submitted_at));
}

std::int64_t word_count_delta(const StrategyEssay& prev, const StrategyEssay& next) noexcept {
  return static_cast<std::int64_t>(next.word_count) - static_cast<std::int64_t>(prev.word_count);
}

void to_json(nlohmann::json& j, const StrategyEssay& essay) {
  j = {{"text", essay.text}, {"word_count", essay.word_count}, {"submitted_at", essay.submitted_at}};
}

void from_json(const nlohmann::json& j, StrategyEssay& essay) {
  essay.text = j.at("text").get<std::string>();
  essay.word_count = j.contains("word_count") ? j.at("word_count").get<std::size_t>()
                                              : word_count(essay.text);
  essay.submitted_at = j.value("submitted_at", TimestampMs{0});
}

}  // namespace jitfb
