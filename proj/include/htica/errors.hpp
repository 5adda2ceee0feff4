#pragma once

#include <stdexcept>
#include <string>

namespace htica {

/// Raised when an iterative numerical routine cannot certify its answer.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace htica
