#pragma once

#include <string_view>

namespace jitfb::detail {

std::string_view jit_template() noexcept;
std::string_view posthoc_template() noexcept;

}  // namespace jitfb::detail
