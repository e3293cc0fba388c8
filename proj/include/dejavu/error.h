#pragma once

#include <stdexcept>
#include <string>

namespace dejavu {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: unknown ids, broken invariants, bad files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dejavu
