// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace disaqa {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                      const GradCheckOptions& options) {
  if (options.eps < 1e-6 || options.eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  for (auto [name, p] : params) p.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw std::runtime_error("grad_check: loss is not finite");
  loss.backward();

  GradReport report;
  Rng rng(options.seed);
  for (auto [name, p] : params) {
    if (!p.requires_grad()) {
      report.per_param_errors[name] = 0.0;
      report.analytic_norms[name] = 0.0;
      continue;
    }
    std::vector<double> analytic(p.numel(), 0.0);
    if (!p.grad().empty()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());

    std::vector<std::size_t> idx(p.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_elements_per_param && idx.size() > options.max_elements_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_elements_per_param);
      std::sort(idx.begin(), idx.end());
    }

    double diff2 = 0.0, a2 = 0.0, f2 = 0.0, full2 = 0.0;
    for (double g : analytic) full2 += g * g;
    auto vals = p.values();
    for (std::size_t i : idx) {
      const double orig = vals[i];
      vals[i] = orig + options.eps;
      const double up = evaluate(loss_fn);
      vals[i] = orig - options.eps;
      const double down = evaluate(loss_fn);
      vals[i] = orig;
      const double fd = (up - down) / (2.0 * options.eps);
      diff2 += (analytic[i] - fd) * (analytic[i] - fd);
      a2 += analytic[i] * analytic[i];
      f2 += fd * fd;
    }
    report.checked_elements += idx.size();
    const double denom = std::max(std::sqrt(a2) + std::sqrt(f2), options.norm_floor);
    const double err = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
    report.per_param_errors[name] = err;
    report.analytic_norms[name] = std::sqrt(full2);
  }
  for (const auto& [name, err] : report.per_param_errors) {
    if (report.worst_param.empty() || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_param = name;
    }
  }
  return report;
}

}  // namespace disaqa
