#pragma once

namespace riskvi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace riskvi
