#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gqc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid grid specification or mismatched grids between operands.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Expression syntax error; `position` is the 0-based character offset.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what + " at position " + std::to_string(position)), position_(position) {}

    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// A value is outside the domain of an operation (non-finite sample, log of a
/// non-positive argument, ...). `node` is the offending interior node index.
class DomainError : public Error {
public:
    DomainError(const std::string& what, std::size_t node)
        : Error(what + " (node " + std::to_string(node) + ")"), node_(node) {}
    explicit DomainError(const std::string& what) : Error(what), node_(npos) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    [[nodiscard]] std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// Iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Run configuration could not be interpreted; `pointer` is a JSON pointer.
class ConfigError : public Error {
public:
    ConfigError(const std::string& pointer, const std::string& what)
        : Error(pointer.empty() ? what : pointer + ": " + what), pointer_(pointer) {}

    [[nodiscard]] const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

} // namespace gqc
