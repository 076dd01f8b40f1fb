#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uniadet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside a function's mathematical domain (zero-norm vector, tau <= 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Vector/grid dimensions that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Caller misuse: empty inputs, non-positive sizes, unsupported operations.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Features, weights and banks that were built for different layer sets.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Manifest or dataset content that violates its schema or invariants.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Non-finite losses or gradients during training.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A metric that is undefined for the given input (e.g. AUROC with one class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace uniadet
