#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqmeta {

enum class ErrorKind {
    invalid_spec,
    shape_mismatch,
    numerical_failure,
    invalid_argument,
    sampling,
    io,
    parse,
    non_deterministic,
};

const char* to_string(ErrorKind kind);

/// Base of every error raised by the library. `kind()` lets callers branch
/// without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Adjacent layers disagree on shape, or a layer descriptor is malformed.
/// `first_layer`/`second_layer` index the offending pair (equal when a single
/// layer is at fault).
class SpecError : public Error {
public:
    SpecError(std::size_t first_layer, std::size_t second_layer, const std::string& message);
    std::size_t first_layer() const noexcept { return first_; }
    std::size_t second_layer() const noexcept { return second_; }

private:
    std::size_t first_;
    std::size_t second_;
};

class ShapeError : public Error {
public:
    ShapeError(const std::string& what, std::size_t expected, std::size_t actual);
    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

/// NaN or Inf produced while running layer `layer` (forward or backward).
class NumericalError : public Error {
public:
    NumericalError(std::size_t layer, const std::string& message);
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

inline Error invalid_argument(const std::string& message) {
    return Error(ErrorKind::invalid_argument, message);
}

}  // namespace seqmeta
