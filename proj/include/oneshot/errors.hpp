#pragma once

#include <stdexcept>
#include <string>

namespace oneshot {

/// Rejected input: a violated precondition or an invalid configuration value.
/// The CLI maps this to exit code 2.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A solver or series evaluation that could not reach the requested accuracy.
/// The CLI maps this to exit code 3.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace oneshot
