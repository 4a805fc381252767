#include "seqmeta/errors.hpp"

namespace seqmeta {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_spec: return "invalid_spec";
        case ErrorKind::shape_mismatch: return "shape_mismatch";
        case ErrorKind::numerical_failure: return "numerical_failure";
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::sampling: return "sampling";
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::non_deterministic: return "non_deterministic";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

SpecError::SpecError(std::size_t first_layer, std::size_t second_layer,
                     const std::string& message)
    : Error(ErrorKind::invalid_spec,
            first_layer == second_layer
                ? "layer " + std::to_string(first_layer) + ": " + message
                : "layers " + std::to_string(first_layer) + " -> " +
                      std::to_string(second_layer) + ": " + message),
      first_(first_layer),
      second_(second_layer) {}

ShapeError::ShapeError(const std::string& what, std::size_t expected, std::size_t actual)
    : Error(ErrorKind::shape_mismatch, what + ": expected " + std::to_string(expected) +
                                           ", got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

NumericalError::NumericalError(std::size_t layer, const std::string& message)
    : Error(ErrorKind::numerical_failure,
            "non-finite value at layer " + std::to_string(layer) + ": " + message),
      layer_(layer) {}

}  // namespace seqmeta
