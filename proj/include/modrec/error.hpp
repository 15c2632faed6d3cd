// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace modrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset where decoding failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Bad user configuration (unknown key, malformed line, invalid value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training diverged (non-finite loss or activations).
class NumericError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw Error(msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

} // namespace modrec
