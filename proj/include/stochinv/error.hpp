#ifndef STOCHINV_ERROR_HPP
#define STOCHINV_ERROR_HPP

#include <stdexcept>
#include <string>

namespace stochinv {

// Error taxonomy. The CLI maps each family to its own exit code, so every
// throw site must pick the family that matches the failure, not the call site.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values: hyperparameters outside their domain, quantile
// probabilities outside (0,1), evaluation points outside a feasible box.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Problems with supplied data: dimension mismatches, degenerate ensembles,
// empty inputs, unpaired sample sets, missing files with usable content.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failures: ill-conditioned regression, tuning that cannot reach
// the acceptance band, NaN log-densities, undefined metrics.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Config-schema violations, reported with field-level context.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace stochinv

#endif  // STOCHINV_ERROR_HPP
