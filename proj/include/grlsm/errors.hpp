#pragma once

#include <stdexcept>
#include <string>

namespace grlsm {

// Base for all library failures. CLI maps these to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad flags, bad config files, out-of-contract arguments. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Unreadable/malformed input data at runtime. CLI exit code 1.
struct DataError : Error {
    using Error::Error;
};

} // namespace grlsm
