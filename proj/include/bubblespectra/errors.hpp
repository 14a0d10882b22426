#pragma once

#include <stdexcept>
#include <string>

namespace bubblespectra {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PointOffManifold : public Error {
public:
    using Error::Error;
};

class NonTangentInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Raised when an inner-product matrix fails its Cholesky factorization.
/// Carries the smallest eigenvalue so callers can report how far off it is.
class NotPositiveDefinite : public Error {
public:
    NotPositiveDefinite(const std::string& what, double smallest)
        : Error(what), smallest_eigenvalue(smallest) {}
    double smallest_eigenvalue;
};

class ConvergenceFailure : public Error {
public:
    using Error::Error;
};

class ResolutionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ResourceLimit : public Error {
public:
    using Error::Error;
};

}  // namespace bubblespectra
