#pragma once

#include <stdexcept>
#include <string>

namespace retarda {

/// Rejected input: malformed kernels, inconsistent grids, out-of-domain
/// arguments, configuration that violates a precondition. The CLI maps this
/// to exit code 2.
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Off-grid time or mismatched grid geometry.
class grid_error : public validation_error {
 public:
  explicit grid_error(const std::string& what) : validation_error(what) {}
};

/// Iteration failure at runtime (Picard divergence, fit degeneracy). The CLI
/// maps this to exit code 3.
class solver_error : public std::runtime_error {
 public:
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace retarda
