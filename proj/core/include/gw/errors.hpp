#pragma once

#include <stdexcept>
#include <string>

namespace gw {

// Tensor shape or arity violation. Messages name the offending extents.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-domain argument (rates, ranges, empty batches, ...).
class ValueError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gw
