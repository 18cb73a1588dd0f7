#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memekit {

enum class ErrorCode {
    io,
    bad_magic,
    truncated_payload,
    trailing_bytes,
    non_finite,
    bad_manifest,
    duplicate_id,
    row_out_of_range,
    label_count,
    dimension_mismatch,
    empty_input,
    out_of_range,
    missing_modality,
    no_examples,
    missing_split_tags,
    invalid_argument,
    not_fitted,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::io: return "io error";
        case ErrorCode::bad_magic: return "bad magic";
        case ErrorCode::truncated_payload: return "truncated payload";
        case ErrorCode::trailing_bytes: return "trailing bytes";
        case ErrorCode::non_finite: return "non-finite component";
        case ErrorCode::bad_manifest: return "bad manifest";
        case ErrorCode::duplicate_id: return "duplicate id";
        case ErrorCode::row_out_of_range: return "row index out of range";
        case ErrorCode::label_count: return "invalid label count";
        case ErrorCode::dimension_mismatch: return "dimension mismatch";
        case ErrorCode::empty_input: return "empty input";
        case ErrorCode::out_of_range: return "argument out of range";
        case ErrorCode::missing_modality: return "missing modality";
        case ErrorCode::no_examples: return "no examples";
        case ErrorCode::missing_split_tags: return "missing split tags";
        case ErrorCode::invalid_argument: return "invalid argument";
        case ErrorCode::not_fitted: return "model not fitted";
    }
    return "unknown error";
}

/// Every data-level failure raised by the library. `code()` lets callers
/// (and tests) tell failures apart without parsing the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace memekit
