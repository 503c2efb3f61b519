#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace subflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset()` is the byte offset of the offending token.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Evaluation left the domain of a primitive (log/sqrt of a nonpositive value,
/// division by zero, non-integer power of a negative base, NaN).
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class SpaceMismatch : public Error {
public:
    SpaceMismatch() : Error("objects live on different spaces") {}
    using Error::Error;
};

class SamplingExhausted : public Error {
public:
    using Error::Error;
};

/// A point-wise precondition failed; `point()` names the offending point.
class PreconditionError : public Error {
public:
    PreconditionError(const std::string& what, std::vector<double> point = {})
        : Error(what), point_(std::move(point)) {}

    const std::vector<double>& point() const noexcept { return point_; }

private:
    std::vector<double> point_;
};

class NotAMember : public PreconditionError {
public:
    explicit NotAMember(std::vector<double> point)
        : PreconditionError("point is not a member of the space", std::move(point)) {}
};

} // namespace subflow
