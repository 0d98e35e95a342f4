// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/diagnostics.hpp"

#include <string>

namespace disaqa {

ModelConfig tiny_config(std::size_t vocab_size) {
  ModelConfig c;
  c.encoder.vocab_size = vocab_size;
  c.encoder.d_model = 8;
  c.encoder.n_layers = 2;
  c.encoder.n_heads = 2;
  c.encoder.d_ffn = 16;
  c.encoder.max_position = 32;
  c.lora.rank = 2;
  c.lora.alpha = 4.0;
  c.head.max_answer_len = 8;
  return c;
}

GradReport model_grad_check(std::uint64_t seed, TrainMode mode) {
  Vocab vocab = build_vocab({"abcdefgh"}, 1);
  QAModel model = QAModel::init(tiny_config(vocab.size()), seed);
  Rng rng(seed + 1);
  for (auto& la : model.adapters()) {
    for (LoRAAdapter* ad : {&la.query, &la.value})
      ad->b = Tensor::randn(ad->b.shape(), 0.5, rng).set_requires_grad(true);
  }
  model.set_train_mode(mode);
  const PackedInput packed = encode_pair("abc", "hgfedcba", vocab, 16);
  const TokenSpan gold{packed.context.begin + 2, packed.context.begin + 4};
  auto loss = [&] { return model.loss(packed, gold, {}); };
  return grad_check(loss, model.named_parameters(), {});
}

}  // namespace disaqa
