#pragma once

namespace rpcbf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rpcbf
