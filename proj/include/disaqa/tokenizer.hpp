// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace disaqa {

class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// The requested character span lies (partly) in truncated context.
class UnrepresentableSpanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Strict UTF-8 <-> code points. Throws std::invalid_argument on malformed input.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
std::size_t utf8_length(std::string_view text);

// Character-level vocabulary. Ids 0-3 are [PAD], [UNK], [CLS], [SEP]; the
// remaining ids follow descending corpus frequency, ties by code point.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kSep = 3;
  static constexpr std::size_t kNumSpecials = 4;

  Vocab();

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t min_freq() const { return min_freq_; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::int32_t id(char32_t ch) const;
  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;

  std::vector<std::int32_t> encode(std::string_view text) const;
  // Specials decode to their bracketed names.
  std::string decode(std::span<const std::int32_t> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  friend Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);
  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.id_to_token_ == b.id_to_token_ && a.min_freq_ == b.min_freq_;
  }

 private:
  void add(std::string token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::unordered_map<char32_t, std::int32_t> char_to_id_;
  std::size_t min_freq_ = 1;
};

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);

// Half-open token interval.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

// Inclusive token span.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

// `[CLS] q [SEP] c [SEP]` followed by [PAD] up to the padded length.
struct PackedInput {
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::uint8_t> attention_mask;
  TokenRange context;
  std::size_t question_tokens = 0;

  std::size_t length() const { return token_ids.size(); }
  std::size_t real_length() const { return context.end + 1; }
  // Copy re-padded (or trimmed of padding) to `length` >= real_length().
  PackedInput padded_to(std::size_t length) const;

  friend bool operator==(const PackedInput&, const PackedInput&) = default;
};

// Packs a question/context pair into at most max_len positions. Context is
// truncated from the right when needed; the question is never truncated.
// Throws CapacityError when max_len < |q| + 4.
PackedInput encode_pair(std::string_view question, std::string_view context, const Vocab& vocab,
                        std::size_t max_len);

// Maps a half-open code-point span of `context` to an inclusive token span.
// Throws IndexError for an invalid span and UnrepresentableSpanError when
// the span reaches into truncated context.
TokenSpan align_span(std::string_view context, std::size_t char_start, std::size_t char_end,
                     const PackedInput& packed);

}  // namespace disaqa
