#pragma once

#include <stdexcept>
#include <string>

namespace jitfb {

// Base for every domain error raised by the library. Subclasses carry a
// machine-readable kind alongside the message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jitfb
