#pragma once

#include <stdexcept>
#include <string>

namespace fibershape {

/// Bad input from the caller: invalid arguments, malformed files, violated
/// invariants. The CLI maps these to exit code 1.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// NaN/Inf or another numerical breakdown during a computation (exit code 2).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InvalidInput(what);
}

}  // namespace fibershape
