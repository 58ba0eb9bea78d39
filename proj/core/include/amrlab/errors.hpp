#pragma once

#include <stdexcept>
#include <string>

namespace amrlab {

// Bad user input: unknown config keys, inconsistent case settings.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Inverted elements, NaN in the state, unsatisfiable ghost fills.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace amrlab
