#pragma once

#include <stdexcept>
#include <string>

namespace cpcr {

// Base of everything the library throws on bad input or numerical trouble.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class InvariantError : public Error { using Error::Error; };
class FitError : public Error { using Error::Error; };
class DimensionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

// Numerical failures inside the regression / QP layer.
class SingularError : public Error { using Error::Error; };
class ConditioningError : public Error { using Error::Error; };
class SolverError : public Error { using Error::Error; };

// Model and data disagree (mode never seen in training, feature count).
class UnknownModeError : public Error { using Error::Error; };

}  // namespace cpcr
