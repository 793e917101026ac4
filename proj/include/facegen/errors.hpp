#pragma once

#include <stdexcept>
#include <string>

namespace facegen {

// Bad user input: malformed requests, invalid configs, out-of-domain
// arguments, shape mismatches. CLI maps these to exit code 2, the HTTP
// server to 4xx responses.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures at runtime: non-finite losses, ill-conditioned
// matrix square roots, diverging training steps. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / wire-format failures. Exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace facegen
