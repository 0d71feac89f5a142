#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mangapipe {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed in-process input.
class InputError : public Error {
public:
    using Error::Error;
};

class OutOfBoundsError : public InputError {
public:
    using InputError::InputError;
};

/// Token stream could not be decoded. `token_index` points at the offending
/// token (or at the stream length when the stream ended early).
class ParseError : public Error {
public:
    ParseError(std::size_t token_index, std::string reason)
        : Error("token " + std::to_string(token_index) + ": " + reason),
          token_index_(token_index),
          reason_(std::move(reason)) {}

    std::size_t token_index() const noexcept { return token_index_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t token_index_;
    std::string reason_;
};

/// JSON document does not match the expected schema. `pointer` is a
/// JSON-pointer style location such as `/pages/0/edges/text_char/3`.
class SchemaError : public Error {
public:
    SchemaError(std::string pointer, const std::string& message)
        : Error((pointer.empty() ? std::string("/") : pointer) + ": " + message),
          pointer_(std::move(pointer)) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

class IoError : public Error {
public:
    IoError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Network-level failure (connection refused, reset, 5xx). Retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

/// The peer answered, but the answer breaks the wire contract. Never retried.
class ProtocolError : public Error {
public:
    ProtocolError(const std::string& message, std::string payload, std::optional<int> http_status = std::nullopt)
        : Error(message), payload_(std::move(payload)), http_status_(http_status) {}

    const std::string& payload() const noexcept { return payload_; }
    std::optional<int> http_status() const noexcept { return http_status_; }

private:
    std::string payload_;
    std::optional<int> http_status_;
};

}  // namespace mangapipe
