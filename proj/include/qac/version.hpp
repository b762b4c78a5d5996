#pragma once

namespace qac {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qac
