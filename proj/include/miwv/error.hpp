#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace miwv {

enum class ErrorKind {
    Usage,
    Config,
    FileNotFound,
    Parse,
    Schema,
    TooSmall,
    Template,
    SameSample,
    EmptySequence,
    DimensionMismatch,
    IdOutOfRange,
    BackendUnavailable,
    CacheCorrupt,
    ContextOverflow,
    MalformedResponse,
    EmptyResponseSpan,
    Empty,
    RatioOutOfRange,
    EmptySelection,
    IdNotFound,
    Io,
    MissingArtifact,
    StaleArtifact,
};

std::string_view to_string(ErrorKind kind);

// Process exit code for the CLI: 1 usage/config, 2 data validation,
// 3 backend unavailable, 4 stale or missing artifact.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<std::size_t> index = std::nullopt, std::string field = {});

    ErrorKind kind() const noexcept { return kind_; }
    // record position (ParseError, SchemaError) or offending id (IdNotFound, IdOutOfRange)
    std::optional<std::size_t> index() const noexcept { return index_; }
    const std::string& field() const noexcept { return field_; }
    // what() without the kind prefix
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::optional<std::size_t> index_;
    std::string field_;
    std::string message_;
};

}  // namespace miwv
