#pragma once

#include <stdexcept>
#include <string>

namespace synthcp {

// Error categories. The CLI maps these onto process exit codes.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class PrerequisiteError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace synthcp
