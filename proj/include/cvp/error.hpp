#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvp {

/// Malformed expression text. `offset()` is the byte offset of the offending token.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Evaluation outside an expression's natural domain (log of a non-positive
/// value, division by zero, non-finite intermediate).
class EvalError : public std::runtime_error {
public:
    EvalError(const std::string& what, std::string subexpression)
        : std::runtime_error(what + " in `" + subexpression + "`"),
          subexpression_(std::move(subexpression)) {}

    const std::string& subexpression() const noexcept { return subexpression_; }

private:
    std::string subexpression_;
};

/// Invalid run configuration or invalid construction arguments.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (too many failed paths, quadrature did not converge).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cvp
