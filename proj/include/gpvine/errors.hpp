#pragma once

#include <stdexcept>
#include <string>

namespace gpvine {

//! Base class of all errors thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Argument outside the admissible domain (parameter ranges, bandwidths,
//! truncation levels).
class DomainError : public Error
{
public:
  using Error::Error;
};

//! Evaluation at 0 or 1 where Gaussian quantiles diverge.
class BoundaryError : public Error
{
public:
  using Error::Error;
};

//! Mismatched or insufficient dimensions.
class SizeError : public Error
{
public:
  using Error::Error;
};

//! An estimator could not produce a fit (degenerate data, EP breakdown).
class FitError : public Error
{
public:
  using Error::Error;
};

//! A local-likelihood window holds too few observations.
class WindowError : public FitError
{
public:
  using FitError::FitError;
};

//! Factorizations that stay singular after jitter escalation.
class NumericalError : public Error
{
public:
  using Error::Error;
};

//! Malformed input files.
class ParseError : public Error
{
public:
  using Error::Error;
};

//! Operation not supported by the object it was called on.
class StateError : public Error
{
public:
  using Error::Error;
};

} // namespace gpvine
