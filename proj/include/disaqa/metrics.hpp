// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/tokenizer.hpp"

namespace disaqa {

struct MetricsReport {
  double start_accuracy = 0.0;
  double end_accuracy = 0.0;
  double span_f1 = 0.0;
  double exact_match = 0.0;
  double bleu = 0.0;
  std::size_t n_examples = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

// (start accuracy, end accuracy). Throws std::invalid_argument on empty or
// mismatched inputs.
std::pair<double, double> position_accuracy(std::span<const TokenSpan> preds,
                                            std::span<const TokenSpan> golds);

// Overlap of token positions; 0 when the spans are disjoint.
double span_f1(TokenSpan pred, TokenSpan gold);

double exact_match(std::span<const TokenSpan> preds, std::span<const TokenSpan> golds);

// Corpus BLEU with clipped n-gram precisions pooled over the corpus, uniform
// weights over n = 1..N where N = min(4, longest candidate), no smoothing.
// Throws std::invalid_argument for mismatched lengths or an empty reference.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references);

// Everything at once. Texts feed BLEU as character tokens.
MetricsReport evaluate(std::span<const TokenSpan> preds, std::span<const TokenSpan> golds,
                       const std::vector<std::string>& pred_texts,
                       const std::vector<std::string>& gold_texts);

// One token per code point.
std::vector<std::string> char_tokens(std::string_view text);

}  // namespace disaqa
