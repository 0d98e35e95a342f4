// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "disaqa/grad_check.hpp"
#include "disaqa/model.hpp"

namespace disaqa {

// d=8, 2 layers, 2 heads: small enough to finite-difference every weight.
ModelConfig tiny_config(std::size_t vocab_size);

// Finite-difference check of the whole model (encoder, adapters, Bi-LSTM,
// heads, loss) on a random packed example. Adapter B matrices are randomized
// so A receives a nonzero gradient. Runs in eval mode.
GradReport model_grad_check(std::uint64_t seed, TrainMode mode = TrainMode::full);

}  // namespace disaqa
