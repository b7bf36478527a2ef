#pragma once

namespace partmap {

inline constexpr const char* kVersion = "0.1.0";

} // namespace partmap
