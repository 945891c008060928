#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftlab {

/// Tensor or parameter shapes that do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation was called in the wrong order (backward before forward, no heads, ...).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// L2 normalization of a (near) zero vector.
class NormalizationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed input file. `position()` is a byte offset (binary formats) or a
/// 1-based line number (text formats).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    [[nodiscard]] std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Invalid experiment configuration; `key()` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Training could not make progress (e.g. no valid triplets in any batch).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace driftlab
