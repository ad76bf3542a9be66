#pragma once

#include <stdexcept>
#include <string>

namespace agx {

// Single exception type for the whole library. Messages are meant to be
// printable as-is by the CLI ("error: <what>").
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace agx
