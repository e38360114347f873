#ifndef CPLAB_GRADCHECK_HPP_
#define CPLAB_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cplab/autograd.hpp"

namespace cplab {

// Rebuilds the graph from the current leaf values and returns a 1x1 Var.
using ScalarFn = std::function<Var()>;

inline constexpr double kFdStep = 1e-5;

// Central differences of f w.r.t. every entry of `leaf` (mutated in place and
// restored).
Matrix numeric_gradient(const ScalarFn& f, Var& leaf, double step = kFdStep);

// ||a - n||_inf / max(||a||_inf, ||n||_inf, 1e-8).
double relative_error(const Matrix& analytic, const Matrix& numeric);
// Same norm taken over the concatenation of several leaves.
double relative_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric);

// Relative error between backward() and central FD over all leaves jointly.
double check_gradients(const ScalarFn& f, std::vector<Var> leaves, double step = kFdStep);

struct GradCheckCase {
  std::string name;
  // Builds a seeded random instance (entries in [-2, 2]) and returns its max
  // relative error.
  std::function<double(std::uint64_t seed)> run;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t trials = 0;
};

// Every loss and layer, registered once each.
const std::vector<GradCheckCase>& gradcheck_registry();

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t trials = 20);

}  // namespace cplab

#endif  // CPLAB_GRADCHECK_HPP_
