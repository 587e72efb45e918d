#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "siamapn/nn.hpp"
#include "siamapn/tensor.hpp"

namespace siamapn {

struct GradcheckOptions {
  std::uint64_t seed = 20240607;
  std::size_t cases = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
};

/// Compares reverse-mode gradients of sum(f() (.) R), R a fixed random
/// projection, against central differences for every element of `inputs`.
/// Returns the largest relative error.
double check_gradients(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                       Rng& rng, const GradcheckOptions& opt);

struct GradcheckResult {
  std::string name;
  std::size_t cases = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Names of every check in the suite, in run order.
std::vector<std::string> gradcheck_names();

/// Runs every primitive and composite check `opt.cases` times on random small
/// shapes; progress lines go to `log` when given.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opt,
                                                 std::ostream* log = nullptr);

}  // namespace siamapn
