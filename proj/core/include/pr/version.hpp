#pragma once

namespace pr {

inline constexpr const char* kVersionString = "projreg 0.1.0";

}  // namespace pr
