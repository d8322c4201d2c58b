#pragma once

#include <stdexcept>
#include <string>

namespace follisim {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A configuration document is malformed, inconsistent, or out of range.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A structural hypothesis of the model is violated at runtime (velocity sign
// conditions, parameter admissibility discovered mid-run, ...).
class AssumptionViolated : public Error {
public:
    using Error::Error;
};

// An iteration failed to reach its tolerance within its budget.
class NoConvergence : public Error {
public:
    using Error::Error;
};

// A certified a-priori bound was violated by computed data.
class BoundViolation : public Error {
public:
    using Error::Error;
};

// A coordinate fell outside the domain it is required to lie in.
class OutOfDomain : public Error {
public:
    using Error::Error;
};

// A time-stepping primitive failed (non-finite state, zero step, ...).
class StepFailure : public Error {
public:
    using Error::Error;
};

// A query was made outside the time range covered by a trajectory.
class WindowExceeded : public Error {
public:
    using Error::Error;
};

// A characteristic chain exceeded its structural hop budget.
class ChainOverflow : public Error {
public:
    using Error::Error;
};

// A velocity that must be bounded away from zero vanished or changed sign.
class DegenerateVelocity : public Error {
public:
    using Error::Error;
};

// The region decomposition backing a quadrature is inconsistent.
class QuadratureFailure : public Error {
public:
    using Error::Error;
};

// The sampled lower velocity bound came out non-positive.
class NonpositiveK2 : public Error {
public:
    using Error::Error;
};

// The finite-volume step constraint was violated.
class CFLViolation : public Error {
public:
    using Error::Error;
};

// A state array stopped being finite.
class NonfiniteState : public Error {
public:
    using Error::Error;
};

// A weak-form test function does not satisfy its vanishing conditions.
class InvalidTestFunction : public Error {
public:
    using Error::Error;
};

} // namespace follisim
