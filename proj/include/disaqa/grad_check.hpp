// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "disaqa/tensor.hpp"

namespace disaqa {

using NamedTensor = std::pair<std::string, Tensor>;

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::map<std::string, double> per_param_errors;
  // Norm of the reverse-mode gradient; exactly 0 for frozen parameters.
  std::map<std::string, double> analytic_norms;
  std::size_t checked_elements = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Lower bound on the error denominator. Gradients that vanish identically
  // (a bias feeding a shift-invariant softmax) otherwise compare two
  // round-off residues and report a meaningless error near 1.
  double norm_floor = 1e-6;
  // 0 checks every element; otherwise a seeded sample of this many per tensor.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients against central finite differences.
//
// The per-parameter error is ||g_analytic - g_fd|| / (||g_analytic|| + ||g_fd||)
// over the checked elements (0 when both are zero). Frozen parameters
// (requires_grad == false) are reported with a zero analytic gradient and
// are not perturbed. loss_fn must be deterministic.
GradReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                      const GradCheckOptions& options = {});

}  // namespace disaqa
