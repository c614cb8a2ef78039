#include "jitfb/label.hpp"

#include "jitfb/error.hpp"

namespace jitfb {

std::string_view label_name(ErrorLabel label) noexcept {
  switch (label) {
    case ErrorLabel::Correct: return "correct";
    case ErrorLabel::Direction: return "direction";
    case ErrorLabel::Position: return "position";
    case ErrorLabel::PositionDirection: return "position-direction";
  }
  return "correct";
}

char short_code(ErrorLabel label) noexcept {
  static constexpr char kCodes[] = {'C', 'D', 'P', 'X'};
  return kCodes[label_index(label)];
}

std::optional<ErrorLabel> parse_label(std::string_view name) noexcept {
  for (auto label : kAllLabels) {
    if (label_name(label) == name) return label;
  }
  return std::nullopt;
}

std::optional<ErrorLabel> label_from_short_code(char code) noexcept {
  for (auto label : kAllLabels) {
    if (short_code(label) == code) return label;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, ErrorLabel label) { j = std::string(label_name(label)); }

void from_json(const nlohmann::json& j, ErrorLabel& label) {
  if (!j.is_string()) throw Error("error label must be a string");
  auto parsed = parse_label(j.get_ref<const std::string&>());
  if (!parsed) throw Error("unknown error label '" + j.get<std::string>() + "'");
  label = *parsed;
}

}  // namespace jitfb
