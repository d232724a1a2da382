// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cxr {

// Mirrors cxr_status in cxr.h; the numeric values are part of the C ABI.
enum class ErrorCode : int {
    kInvalidArgument = 1,
    kIo = 2,
    kFormat = 3,
    kShape = 4,
    kProtocol = 5,
    kNotFound = 6,
    kUnavailable = 7,
    kDiverged = 8,
    kCorrupt = 9,
    kLeakage = 10,
    kTimeout = 11,
    kInternal = 12,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace cxr
