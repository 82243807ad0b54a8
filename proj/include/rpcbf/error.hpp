#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace rpcbf {

enum class ErrorCode : int {
    invalid_argument = 1,
    config = 2,
    diverged = 3,
    io = 4,
};

// Library-wide exception. `step` and `sample` are filled in when a rollout
// produced a non-finite state.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    std::optional<int> step;
    std::optional<int> sample;

private:
    ErrorCode code_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorCode::invalid_argument, message);
}

}  // namespace rpcbf
