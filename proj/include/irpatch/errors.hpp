#pragma once

#include <stdexcept>
#include <string>

namespace irpatch {

// Shape disagreement between two grids that an operation requires to match.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// A value outside its documented domain (range, parity, positivity...).
class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// A call that violates a stated precondition (e.g. continuous mask where a
// binary one is required, empty object mask).
class PreconditionError : public std::logic_error {
public:
    explicit PreconditionError(const std::string& what) : std::logic_error(what) {}
};

// File read/write/parse failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace irpatch
