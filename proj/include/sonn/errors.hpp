#pragma once

#include <stdexcept>
#include <string>

namespace sonn {

// Decode failure for model files and netpbm images. The code tells callers
// (and tests) apart the distinct failure modes without string matching.
class DecodeError : public std::runtime_error {
 public:
  enum class Code {
    bad_magic,
    truncated,
    bad_version,
    bad_maxval,
    malformed,
  };

  DecodeError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

// Non-finite value where the training contract forbids one. Training aborts
// instead of continuing with poisoned state.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Report arithmetic asked for a (method, dataset, sigma) cell the grid does
// not hold. The message names the missing cell.
class IncompleteGridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sonn
