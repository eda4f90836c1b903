#include "miwv/error.hpp"

namespace miwv {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return "Usage";
        case ErrorKind::Config: return "Config";
        case ErrorKind::FileNotFound: return "FileNotFound";
        case ErrorKind::Parse: return "ParseError";
        case ErrorKind::Schema: return "SchemaError";
        case ErrorKind::TooSmall: return "TooSmall";
        case ErrorKind::Template: return "TemplateError";
        case ErrorKind::SameSample: return "SameSample";
        case ErrorKind::EmptySequence: return "EmptySequence";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::IdOutOfRange: return "IdOutOfRange";
        case ErrorKind::BackendUnavailable: return "BackendUnavailable";
        case ErrorKind::CacheCorrupt: return "CacheCorrupt";
        case ErrorKind::ContextOverflow: return "ContextOverflow";
        case ErrorKind::MalformedResponse: return "MalformedResponse";
        case ErrorKind::EmptyResponseSpan: return "EmptyResponseSpan";
        case ErrorKind::Empty: return "Empty";
        case ErrorKind::RatioOutOfRange: return "RatioOutOfRange";
        case ErrorKind::EmptySelection: return "EmptySelection";
        case ErrorKind::IdNotFound: return "IdNotFound";
        case ErrorKind::Io: return "IoError";
        case ErrorKind::MissingArtifact: return "MissingArtifact";
        case ErrorKind::StaleArtifact: return "StaleArtifact";
    }
    return "Unknown";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage:
        case ErrorKind::Config:
        case ErrorKind::Template:
        case ErrorKind::RatioOutOfRange:
            return 1;
        case ErrorKind::BackendUnavailable:
            return 3;
        case ErrorKind::MissingArtifact:
        case ErrorKind::StaleArtifact:
        case ErrorKind::CacheCorrupt:
            return 4;
        default:
            return 2;
    }
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> index,
             std::string field)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      index_(index),
      field_(std::move(field)),
      message_(message) {}

}  // namespace miwv
