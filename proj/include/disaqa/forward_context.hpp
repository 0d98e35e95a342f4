// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "disaqa/tensor.hpp"

namespace disaqa {

// Train/eval switch plus the dropout RNG for one forward pass.
struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;

  Rng& dropout_rng() const {
    if (!rng) throw std::logic_error("train-mode forward needs an RNG");
    return *rng;
  }
};

// Dropout that is the identity in eval mode, without touching the RNG.
inline Tensor maybe_dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  if (!ctx.train || rate == 0.0) return x;
  return dropout(x, rate, true, ctx.dropout_rng());
}

}  // namespace disaqa
