#pragma once

namespace gwpdti {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gwpdti
