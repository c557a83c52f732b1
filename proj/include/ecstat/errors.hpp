#pragma once

#include <stdexcept>
#include <string>

namespace ecstat {

// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error { using Error::Error; };     // malformed file
class DataError : public Error { using Error::Error; };       // NaN/Inf and friends
class ShapeError : public Error { using Error::Error; };      // rank / size mismatch
class DegenerateError : public Error { using Error::Error; }; // too few labels, points, ...
class ArgumentError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };    // factorization failure
class RangeError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

} // namespace ecstat
