#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace svebm {

/// Base for every error the library raises. `code()` is a short stable token
/// the CLI prints in front of the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string_view code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Dimension mismatch or other violated precondition on a function argument.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("E_CONTRACT", what) {}
};

/// Malformed input data (token out of vocabulary, bad label, length mismatch).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("E_DATA", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("E_CONFIG", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("E_IO", what) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what) : Error("E_EVAL", what) {}
};

/// Raised when a Langevin chain produces a non-finite or runaway state.
class SamplerDivergence : public Error {
 public:
  SamplerDivergence(const std::string& what, std::vector<double> state)
      : Error("E_DIVERGED", what), state_(std::move(state)) {}
  const std::vector<double>& state() const noexcept { return state_; }

 private:
  std::vector<double> state_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace svebm
