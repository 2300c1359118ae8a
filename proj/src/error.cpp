#include "glitch/error.hpp"

namespace glitch {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnsupportedModelType: return "UnsupportedModelType";
        case ErrorCode::MalformedConfig: return "MalformedConfig";
        case ErrorCode::DuplicateTokenId: return "DuplicateTokenId";
        case ErrorCode::SymbolNotInVocab: return "SymbolNotInVocab";
        case ErrorCode::IdOutOfRange: return "IdOutOfRange";
        case ErrorCode::MissingTensor: return "MissingTensor";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteEntries: return "NonFiniteEntries";
        case ErrorCode::NoReferenceTokens: return "NoReferenceTokens";
        case ErrorCode::ZeroReferenceVector: return "ZeroReferenceVector";
        case ErrorCode::DidNotConverge: return "DidNotConverge";
        case ErrorCode::MissingInput: return "MissingInput";
        case ErrorCode::UndecodableToken: return "UndecodableToken";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::ProtocolError: return "ProtocolError";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::EmptyProbe: return "EmptyProbe";
        case ErrorCode::LoadFailure: return "LoadFailure";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::MismatchedRuns: return "MismatchedRuns";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
    for (int c = 0; c <= static_cast<int>(ErrorCode::InvalidArgument); ++c) {
        if (to_string(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
    }
    return std::nullopt;
}

}  // namespace glitch
