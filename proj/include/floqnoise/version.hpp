#pragma once

#include <string_view>

namespace floqnoise {

inline constexpr std::string_view kToolName = "floquet-noise";
inline constexpr std::string_view kToolVersion = "0.1.0";

} // namespace floqnoise
