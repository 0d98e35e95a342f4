// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "disaqa/tensor.hpp"

namespace disaqa {

namespace {

constexpr const char* kSpecialNames[Vocab::kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

[[noreturn]] void bad_utf8(std::size_t at) {
  throw std::invalid_argument("invalid UTF-8 at byte " + std::to_string(at));
}

}  // namespace

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t n = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      n = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      n = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      n = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      n = 4;
      cp = b0 & 0x07;
    } else {
      bad_utf8(i);
    }
    if (i + n > text.size()) bad_utf8(i);
    for (std::size_t k = 1; k < n; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) bad_utf8(i + k);
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[n] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) bad_utf8(i);
    out.push_back(cp);
    i += n;
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::size_t utf8_length(std::string_view text) { return utf8_decode(text).size(); }

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab::Vocab() {
  for (const char* name : kSpecialNames) add(name);
}

void Vocab::add(std::string token) {
  const auto id = static_cast<std::int32_t>(id_to_token_.size());
  if (!token_to_id_.emplace(token, id).second) {
    throw std::invalid_argument("vocab: duplicate token '" + token + "'");
  }
  if (id >= static_cast<std::int32_t>(kNumSpecials)) {
    const auto cps = utf8_decode(token);
    if (cps.size() != 1) throw std::invalid_argument("vocab: token '" + token + "' is not one character");
    char_to_id_.emplace(cps[0], id);
  }
  id_to_token_.push_back(std::move(token));
}

std::int32_t Vocab::id(char32_t ch) const {
  auto it = char_to_id_.find(ch);
  return it == char_to_id_.end() ? kUnk : it->second;
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for (char32_t ch : utf8_decode(text)) ids.push_back(id(ch));
  return ids;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto i : ids) out += token(i);
  return out;
}

nlohmann::json Vocab::to_json() const {
  return {{"tokens", id_to_token_}, {"min_freq", min_freq_}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < kNumSpecials) throw std::invalid_argument("vocab: missing special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (tokens[i] != kSpecialNames[i]) {
      throw std::invalid_argument("vocab: id " + std::to_string(i) + " must be " + kSpecialNames[i]);
    }
  }
  Vocab v;
  v.min_freq_ = j.at("min_freq").get<std::size_t>();
  for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
  std::map<char32_t, std::size_t> freq;
  for (const auto& text : corpus)
    for (char32_t ch : utf8_decode(text)) ++freq[ch];
  std::vector<std::pair<char32_t, std::size_t>> kept;
  for (const auto& [ch, n] : freq)
    if (n >= min_freq) kept.emplace_back(ch, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  v.min_freq_ = min_freq;
  for (const auto& [ch, n] : kept) v.add(utf8_encode(std::u32string(1, ch)));
  return v;
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

PackedInput PackedInput::padded_to(std::size_t length) const {
  if (length < real_length()) {
    throw CapacityError("cannot pad sequence of real length " + std::to_string(real_length()) +
                        " to " + std::to_string(length));
  }
  PackedInput out = *this;
  out.token_ids.resize(length, Vocab::kPad);
  out.segment_ids.resize(length, 0);
  out.attention_mask.resize(length, 0);
  return out;
}

PackedInput encode_pair(std::string_view question, std::string_view context, const Vocab& vocab,
                        std::size_t max_len) {
  const auto q = vocab.encode(question);
  const auto c = vocab.encode(context);
  if (max_len < q.size() + 4) {
    throw CapacityError("question of " + std::to_string(q.size()) +
                        " tokens does not fit max_len " + std::to_string(max_len));
  }
  const std::size_t kept = std::min(c.size(), max_len - q.size() - 3);

  PackedInput p;
  p.question_tokens = q.size();
  p.token_ids.reserve(max_len);
  p.token_ids.push_back(Vocab::kCls);
  p.token_ids.insert(p.token_ids.end(), q.begin(), q.end());
  p.token_ids.push_back(Vocab::kSep);
  p.segment_ids.assign(p.token_ids.size(), 0);
  p.context = {p.token_ids.size(), p.token_ids.size() + kept};
  p.token_ids.insert(p.token_ids.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(kept));
  p.token_ids.push_back(Vocab::kSep);
  p.segment_ids.resize(p.token_ids.size(), 1);
  p.attention_mask.assign(p.token_ids.size(), 1);
  return p.padded_to(max_len);
}

TokenSpan align_span(std::string_view context, std::size_t char_start, std::size_t char_end,
                     const PackedInput& packed) {
  const std::size_t n = utf8_length(context);
  if (char_start >= char_end || char_end > n) {
    throw IndexError("align_span: invalid character span [" + std::to_string(char_start) + "," +
                     std::to_string(char_end) + ") for context of " + std::to_string(n) +
                     " characters");
  }
  if (char_end > packed.context.size()) {
    throw UnrepresentableSpanError("align_span: span ends at character " + std::to_string(char_end) +
                                   " but only " + std::to_string(packed.context.size()) +
                                   " context characters survive truncation");
  }
  return {packed.context.begin + char_start, packed.context.begin + char_end - 1};
}

}  // namespace disaqa
