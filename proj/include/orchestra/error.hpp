#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace orchestra {

// Bad or inconsistent input data. The CLI maps this to exit code 1.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A broken internal invariant. The CLI maps this to exit code 2.
class InvariantError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Non-fatal findings collected by ingestion and mining routines.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

} // namespace orchestra
