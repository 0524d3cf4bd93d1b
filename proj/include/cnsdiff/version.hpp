#pragma once

namespace cnsdiff {

inline constexpr const char* kVersion = "cnsdiff 0.1.0";

}  // namespace cnsdiff
