// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace doccomp {

/// Base of every error raised by the library. `module()` names the component
/// that rejected the input so the CLI can surface it.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error("[" + module + "] " + what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Tensor extents that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (geometry divisibility, unsupported variants).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Two inputs that were produced for each other disagree (plan vs image, grid cells).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Caller passed an invalid argument (empty list, unknown name).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or failed numerical checks.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// File and format problems.
class IoError : public Error {
public:
    using Error::Error;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace doccomp
