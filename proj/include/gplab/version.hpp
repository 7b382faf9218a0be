#pragma once

namespace gplab {
inline constexpr const char* kToolVersion = "0.1.0";
}
