#pragma once

namespace promptctl {

inline constexpr const char* kVersion = "0.1.0";

#ifdef PROMPTCTL_BUILD_ID
inline constexpr const char* kBuildId = PROMPTCTL_BUILD_ID;
#else
inline constexpr const char* kBuildId = "dev";
#endif

}  // namespace promptctl
