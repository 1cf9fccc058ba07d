#pragma once

#include <stdexcept>
#include <string>

namespace cmc {

// Base class for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed us something that violates a precondition (bad geometry,
// out-of-range index, mismatched model kind...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Similarity metric is undefined for the given overlap (zero variance,
// too few samples).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

// Malformed or corrupted file, version mismatch, checksum failure.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmc
