// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference checks of the reverse-mode gradients, f64 only.
// Each case builds a scalar from random inputs (ops are reduced against a
// fixed random weight tensor) and compares every input gradient entry with
// (f(x + h) - f(x - h)) / 2h.
//
// Relative error per input tensor: max |analytic - numeric| divided by
// max(1e-6, max |analytic|, max |numeric|). A case reports its worst tensor.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "art/autograd.hpp"

namespace art {

struct GradcheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::optional<GradientCorruption> corruption;  // test hook
  bool include_end_to_end = true;
};

struct GradcheckCase {
  std::string op;
  double max_rel_error = 0;
  std::size_t entries = 0;  // perturbed input entries
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  bool passed() const;
  std::vector<std::string> failures() const;
};

using ScalarFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

// Checks f at `inputs`; all inputs are treated as differentiable leaves.
GradcheckCase check_gradient(const std::string& name, const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                             const GradcheckOptions& opts);

// Every differentiable op plus the layer, loss and end-to-end instances.
GradcheckReport run_gradcheck_suite(const GradcheckOptions& opts);

}  // namespace art
