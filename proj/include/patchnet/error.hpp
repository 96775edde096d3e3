#pragma once

#include <stdexcept>
#include <string>

namespace patchnet {

// Fatal, user-visible failure. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace patchnet
