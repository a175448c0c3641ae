#pragma once

namespace spqt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace spqt
