#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace glitch {

enum class ErrorCode {
    // tokenizer_core
    UnsupportedModelType,
    MalformedConfig,
    DuplicateTokenId,
    SymbolNotInVocab,
    IdOutOfRange,
    // embeddings
    MissingTensor,
    ShapeMismatch,
    NonFiniteEntries,
    NoReferenceTokens,
    ZeroReferenceVector,
    DidNotConverge,
    MissingInput,
    // verification
    UndecodableToken,
    BackendUnavailable,
    ProtocolError,
    Timeout,
    EmptyProbe,
    // reporting / pipeline
    LoadFailure,
    IoFailure,
    MismatchedRuns,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Thrown by the pipeline; carries the name of the stage that failed.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.code(), "stage '" + stage + "': " + cause.what()), stage_(std::move(stage)) {}
    StageError(std::string stage, ErrorCode code, const std::string& message)
        : Error(code, "stage '" + stage + "': " + message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace glitch
