#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace jitfb {

/// The four-way outcome space shared by classification, quiz options and
/// trajectory analysis. Declaration order is the canonical "enum order" used
/// for grouping, tie-breaking and matrix indexing.
enum class ErrorLabel : std::uint8_t {
  Correct,
  Direction,
  Position,
  PositionDirection,
};

inline constexpr std::size_t kLabelCount = 4;

inline constexpr std::array<ErrorLabel, kLabelCount> kAllLabels{
    ErrorLabel::Correct, ErrorLabel::Direction, ErrorLabel::Position,
    ErrorLabel::PositionDirection};

constexpr std::size_t label_index(ErrorLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

/// "correct", "direction", "position" or "position-direction".
std::string_view label_name(ErrorLabel label) noexcept;

/// C, D, P or X.
char short_code(ErrorLabel label) noexcept;

/// Exact match against the canonical names only.
std::optional<ErrorLabel> parse_label(std::string_view name) noexcept;

std::optional<ErrorLabel> label_from_short_code(char code) noexcept;

void to_json(nlohmann::json& j, ErrorLabel label);
void from_json(const nlohmann::json& j, ErrorLabel& label);

}  // namespace jitfb
