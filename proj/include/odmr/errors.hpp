#ifndef ODMR_ERRORS_HPP
#define ODMR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace odmr {

/// Base class for all domain errors thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Spectrum has no usable dip structure (dynamic range below the noise floor).
class FlatSpectrumError : public Error {
public:
  using Error::Error;
};

/// A least-squares fit ran out of iterations without meeting a stopping rule.
class FitDivergedError : public Error {
public:
  using Error::Error;
};

/// JᵀJ (+ damping) could not be factorized, or J is rank deficient.
class SingularNormalMatrixError : public Error {
public:
  using Error::Error;
};

/// A residual evaluation produced NaN or infinity.
class NonFiniteResidualError : public Error {
public:
  using Error::Error;
};

/// Too few data points for the requested model.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

/// Requested value lies outside the band a calibration can reach.
class OutOfCalibrationRangeError : public Error {
public:
  using Error::Error;
};

/// Inversion requested on a model that is not monotone over its fit range.
class NonMonotoneModelError : public Error {
public:
  using Error::Error;
};

/// Query temperatures fall outside the fitted range of a companion model.
class RangeMismatchError : public Error {
public:
  using Error::Error;
};

/// Statistics requested on fewer than two samples.
class TooFewSamplesError : public Error {
public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
  using Error::Error;
};

} // namespace odmr

#endif
