#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace privshield {

// Scalar type for all in-memory math. Checkpoints store float32 (see nets.hpp).
using real = double;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a training loss becomes non-finite; carries the optimizer step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace privshield
