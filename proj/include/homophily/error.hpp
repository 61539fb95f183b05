#pragma once

#include <stdexcept>
#include <string>

namespace homophily {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent user-supplied configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Soft value iteration exceeded its iteration cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Raised by the orchestrator when one stage fails; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace homophily
