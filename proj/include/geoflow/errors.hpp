#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace geoflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed mesh, out-of-range parameter, mismatched sizes.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Right-hand side fails the mean-zero compatibility condition.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

/// Coefficient or kernel lost ellipticity/positivity.
class EllipticityError : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::vector<double> history)
        : Error(what), residual_history(std::move(history)) {}
    std::vector<double> residual_history;
};

/// Requested time lies below the certified range of a truncated expansion.
class TruncationError : public Error {
public:
    TruncationError(const std::string& what, double t_min) : Error(what), t_min(t_min) {}
    double t_min;
};

/// Resolvent requested inside the sector or too close to the spectrum.
class SpectrumProximity : public Error {
public:
    using Error::Error;
};

class QuadratureError : public Error {
public:
    QuadratureError(const std::string& what, double estimate) : Error(what), error_estimate(estimate) {}
    double error_estimate;
};

/// Internal consistency check failed (e.g. asymmetric polarization).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

} // namespace geoflow
