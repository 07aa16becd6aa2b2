// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace corematch {

enum class ErrorKind {
    InvalidParam,
    ShapeError,
    EmptySet,
    TooFewPoints,
    DegenerateDistribution,
    ZeroVector,
    DegenerateMatrix,
    NonFinite,
    VocabError,
    SequenceOverflow,
    VersionError,
    ChecksumError,
    FormatError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), m_kind(kind) {}

    ErrorKind kind() const noexcept { return m_kind; }

private:
    ErrorKind m_kind;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

}  // namespace corematch
