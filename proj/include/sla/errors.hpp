// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sla {

/// Caller supplied data that violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A non-finite value appeared while iterating. Distinct from non-convergence,
/// which solvers report through their status rather than by throwing.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Well-formed input that a solver does not handle (e.g. fractional marginals
/// passed to the integral flow oracle).
class UnsupportedInstance : public std::runtime_error {
 public:
  explicit UnsupportedInstance(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sla
