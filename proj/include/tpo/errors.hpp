#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tpo {

// Base error carrying a stable machine-readable category, used by the CLI
// to map failures onto exit codes and one-line diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(msg), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define TPO_DEFINE_ERROR(Name, cat)                                   \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& m) : Error(cat, m) {}        \
    }

TPO_DEFINE_ERROR(ConfigError, "config");
TPO_DEFINE_ERROR(IngestError, "ingest");
TPO_DEFINE_ERROR(DuplicateId, "duplicate-id");
TPO_DEFINE_ERROR(SerializationError, "serialization");
TPO_DEFINE_ERROR(ParseError, "parse");
TPO_DEFINE_ERROR(VerdictParseError, "verdict-parse");
TPO_DEFINE_ERROR(EmptyGeneration, "empty-generation");
TPO_DEFINE_ERROR(InsufficientFrames, "insufficient-frames");
TPO_DEFINE_ERROR(InsufficientComplement, "insufficient-complement");
TPO_DEFINE_ERROR(AnchorTooSmall, "anchor-too-small");
TPO_DEFINE_ERROR(InvalidRatio, "invalid-ratio");
TPO_DEFINE_ERROR(VocabError, "vocab");
TPO_DEFINE_ERROR(NumericError, "numeric");
TPO_DEFINE_ERROR(IoError, "io");

// Retryable transport failure; the gateway converts it into GatewayError
// once the retry budget is exhausted.
TPO_DEFINE_ERROR(TransportError, "transport");

class GatewayError : public Error {
public:
    GatewayError(std::string role, const std::string& m)
        : Error("gateway", "[" + role + "] " + m), role_(std::move(role)) {}

    const std::string& role() const noexcept { return role_; }

private:
    std::string role_;
};

#undef TPO_DEFINE_ERROR

}  // namespace tpo
