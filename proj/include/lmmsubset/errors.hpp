#pragma once

#include <stdexcept>
#include <string>

namespace lmmsubset {

// Bad input: schema, parse, shape or configuration problems. The CLI maps
// these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure (factorization, degenerate data). The CLI maps these to
// exit code 2. `where` names the module and block that failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace lmmsubset
