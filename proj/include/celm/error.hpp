#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace celm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or model shapes do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain an operation accepts (e.g. a label >= K).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated input file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A requested partition cannot be realized from the available supply.
class AllocationError : public Error {
public:
    using Error::Error;
};

/// A logit-maximization probe produced a non-finite or runaway objective.
class ProbeDivergence : public Error {
public:
    ProbeDivergence(const std::string& what, std::size_t cls)
        : Error(what), cls_(cls) {}

    /// Zero-based class whose probe diverged.
    std::size_t class_index() const noexcept { return cls_; }

private:
    std::size_t cls_;
};

/// Mutation attempted on contribution state after the freeze round.
class FrozenStateError : public Error {
public:
    using Error::Error;
};

/// Caller broke an operation precondition (e.g. off-simplex aggregation weights).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration; raised before any computation starts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Distribution estimate is undefined (e.g. all-zero evidence).
class UndefinedDistribution : public Error {
public:
    using Error::Error;
};

}  // namespace celm
