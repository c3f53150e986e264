#ifndef UQEVAL_CORE_ERRORS_HPP_
#define UQEVAL_CORE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace uqeval {

// Error taxonomy. code() values match the CLI exit codes and the C API
// status codes: 2 config, 3 data, 4 training divergence.
class Error : public std::runtime_error {
 public:
  Error(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

// Invalid configuration values (bad fractions, M < 2, duplicate seeds, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(2, what) {}
};

// Malformed operation inputs (shape mismatch, non-finite values, mismatched
// curve configs). Surfaces as a config-class failure at the CLI boundary.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(2, what) {}
};

// Uncertainty vectors that cannot support the requested statistic
// (zero-variance bins, zero-mean dispersion).
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(2, what) {}
};

// Unreadable/inconsistent files, infeasible splits, missing columns.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(3, what) {}
};

// NaN/inf loss during training. Carries the epoch (0-based) and, when
// raised through ensemble training, the member index.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int member = -1)
      : Error(4, what), epoch_(epoch), member_(member) {}
  int epoch() const { return epoch_; }
  int member() const { return member_; }

 private:
  int epoch_;
  int member_;
};

}  // namespace uqeval

#endif  // UQEVAL_CORE_ERRORS_HPP_
