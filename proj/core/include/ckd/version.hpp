#pragma once

namespace ckd {

inline constexpr const char* kVersion = "0.1.0";

} // namespace ckd
