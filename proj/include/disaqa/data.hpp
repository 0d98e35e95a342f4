// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disaqa/tokenizer.hpp"

namespace disaqa {

// answer_start_char counts code points, not bytes.
struct QARecord {
  std::string id;
  std::string question;
  std::string context;
  std::string answer_text;
  std::size_t answer_start_char = 0;

  std::size_t answer_end_char() const;  // exclusive
  friend bool operator==(const QARecord&, const QARecord&) = default;
};

void to_json(nlohmann::json& j, const QARecord& r);
void from_json(const nlohmann::json& j, QARecord& r);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws DatasetError naming the record id when the answer slice mismatches.
void validate_record(const QARecord& r);

std::vector<QARecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<QARecord>& records);
std::string to_jsonl(const std::vector<QARecord>& records);

// Only "disaster" exists today.
inline constexpr const char* kDefaultTemplateSet = "disaster";

std::vector<QARecord> generate_synthetic(std::size_t n, std::uint64_t seed,
                                         const std::string& template_set = kDefaultTemplateSet);

struct Example {
  std::string id;
  PackedInput input;  // trimmed to its real length
  TokenSpan gold;
  std::string context;
  std::string answer_text;
};

// Every input is padded to the longest real length in the batch.
struct Batch {
  std::vector<PackedInput> inputs;
  std::vector<TokenSpan> golds;
  std::vector<std::string> ids;

  std::size_t size() const { return inputs.size(); }
};

// Packs and aligns every record, skipping (and counting) those whose answer
// lies in truncated context. Throws DatasetError when nothing survives.
struct EncodedSet {
  std::vector<Example> examples;
  std::size_t dropped = 0;
};
EncodedSet encode_records(const std::vector<QARecord>& records, const Vocab& vocab,
                          std::size_t max_len);

struct BatchPlan {
  std::vector<Batch> batches;
  std::size_t dropped = 0;
};
BatchPlan make_batches(const std::vector<QARecord>& records, const Vocab& vocab,
                       std::size_t max_len, std::size_t micro_batch, std::uint64_t shuffle_seed);

// Groups already-encoded examples in a seeded shuffled order.
std::vector<Batch> batch_examples(const std::vector<Example>& examples, std::size_t micro_batch,
                                  std::uint64_t shuffle_seed);

struct Split {
  std::vector<QARecord> train;
  std::vector<QARecord> val;
};

// Seeded, disjoint and covering. The validation share is round(n * fraction),
// kept at >= 1 record when n >= 2.
Split split_dataset(const std::vector<QARecord>& records, double val_fraction, std::uint64_t seed);

// Text covered by an inclusive token span of the context zone.
std::string span_text(const std::string& context, const PackedInput& packed, TokenSpan span);

std::vector<std::string> corpus_texts(const std::vector<QARecord>& records);

}  // namespace disaqa
