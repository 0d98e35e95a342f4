// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace disaqa {

std::string MetricsReport::csv_header() {
  return "start_accuracy,end_accuracy,span_f1,exact_match,bleu,n_examples";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << start_accuracy << ',' << end_accuracy << ',' << span_f1 << ',' << exact_match << ','
     << bleu << ',' << n_examples;
  return os.str();
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"start_accuracy", r.start_accuracy}, {"end_accuracy", r.end_accuracy},
       {"span_f1", r.span_f1},               {"exact_match", r.exact_match},
       {"bleu", r.bleu},                     {"n_examples", r.n_examples}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.start_accuracy = j.at("start_accuracy").get<double>();
  r.end_accuracy = j.at("end_accuracy").get<double>();
  r.span_f1 = j.at("span_f1").get<double>();
  r.exact_match = j.at("exact_match").get<double>();
  r.bleu = j.at("bleu").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
}

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a) + " predictions vs " +
                                std::to_string(b) + " gold spans");
  }
  if (a == 0) throw std::invalid_argument(std::string(what) + ": no examples");
}

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

std::pair<double, double> position_accuracy(std::span<const TokenSpan> preds,
                                            std::span<const TokenSpan> golds) {
  check_pair(preds.size(), golds.size(), "position_accuracy");
  std::size_t s = 0, e = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    s += preds[i].start == golds[i].start;
    e += preds[i].end == golds[i].end;
  }
  const double n = static_cast<double>(preds.size());
  return {s / n, e / n};
}

double span_f1(TokenSpan pred, TokenSpan gold) {
  const std::size_t lo = std::max(pred.start, gold.start);
  const std::size_t hi = std::min(pred.end, gold.end);
  if (lo > hi) return 0.0;
  const double overlap = static_cast<double>(hi - lo + 1);
  const double p = overlap / static_cast<double>(pred.end - pred.start + 1);
  const double r = overlap / static_cast<double>(gold.end - gold.start + 1);
  return 2.0 * p * r / (p + r);
}

double exact_match(std::span<const TokenSpan> preds, std::span<const TokenSpan> golds) {
  check_pair(preds.size(), golds.size(), "exact_match");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(references.size()) + " references");
  }
  if (candidates.empty()) throw std::invalid_argument("bleu: empty corpus");
  std::size_t c = 0, r = 0, longest = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) {
      throw std::invalid_argument("bleu: reference " + std::to_string(i) + " is empty");
    }
    c += candidates[i].size();
    r += references[i].size();
    longest = std::max(longest, candidates[i].size());
  }
  if (c == 0) return 0.0;
  const std::size_t n_max = std::min<std::size_t>(4, longest);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    std::size_t matched = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const Ngrams cand = ngrams(candidates[i], n);
      const Ngrams ref = ngrams(references[i], n);
      for (const auto& [g, count] : cand) {
        total += count;
        auto it = ref.find(g);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / static_cast<double>(n_max));
}

std::vector<std::string> char_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (char32_t ch : utf8_decode(text)) out.push_back(utf8_encode(std::u32string(1, ch)));
  return out;
}

MetricsReport evaluate(std::span<const TokenSpan> preds, std::span<const TokenSpan> golds,
                       const std::vector<std::string>& pred_texts,
                       const std::vector<std::string>& gold_texts) {
  MetricsReport rep;
  std::tie(rep.start_accuracy, rep.end_accuracy) = position_accuracy(preds, golds);
  rep.exact_match = exact_match(preds, golds);
  double f1 = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) f1 += span_f1(preds[i], golds[i]);
  rep.span_f1 = f1 / static_cast<double>(preds.size());
  std::vector<std::vector<std::string>> cands, refs;
  for (const auto& t : pred_texts) cands.push_back(char_tokens(t));
  for (const auto& t : gold_texts) refs.push_back(char_tokens(t));
  rep.bleu = bleu(cands, refs);
  rep.n_examples = preds.size();
  return rep;
}

}  // namespace disaqa
