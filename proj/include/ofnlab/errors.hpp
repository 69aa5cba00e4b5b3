#pragma once

#include <stdexcept>
#include <string>

namespace ofn {

/// A precondition of an operation was not met (shape mismatch, bad root, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration value or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite gradient or loss was produced. Carries the name of the
/// offending parameter (or loss) so the harness can log it.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string what_name, const std::string& message)
      : std::runtime_error(message), name_(std::move(what_name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

}  // namespace ofn
