// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "disaqa/tensor.hpp"
#include "disaqa/tokenizer.hpp"

namespace disaqa {
namespace {

TEST(BuildVocab, TieBreaksByCodePoint) {
  Vocab v = build_vocab({"ba"}, 1);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id(U'a'), 4);
  EXPECT_EQ(v.id(U'b'), 5);
}

TEST(BuildVocab, FrequencyOrdersTokens) {
  Vocab v = build_vocab({"abb", "b"}, 1);
  EXPECT_EQ(v.id(U'b'), 4);
  EXPECT_EQ(v.id(U'a'), 5);
}

TEST(BuildVocab, EmptyCorpusHasOnlySpecials) {
  Vocab v = build_vocab({}, 1);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(1), "[UNK]");
  EXPECT_EQ(v.token(2), "[CLS]");
  EXPECT_EQ(v.token(3), "[SEP]");
}

TEST(BuildVocab, RareCharacterMapsToUnk) {
  Vocab v = build_vocab({"aab"}, 2);
  EXPECT_EQ(v.id(U'b'), Vocab::kUnk);
  EXPECT_EQ(v.encode("ba"), (std::vector<std::int32_t>{Vocab::kUnk, v.id(U'a')}));
}

TEST(BuildVocab, MapsAreABijection) {
  Vocab v = build_vocab({"地震が発生しました。 earthquake!"}, 1);
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.size()); ++i) EXPECT_EQ(v.id(v.token(i)), i);
}

TEST(Vocab, JsonRoundTrip) {
  Vocab v = build_vocab({"hello 世界"}, 1);
  const auto j = v.to_json();
  EXPECT_TRUE(j.contains("tokens"));
  EXPECT_EQ(j.at("min_freq"), 1);
  EXPECT_EQ(Vocab::from_json(j), v);
}

TEST(Vocab, DecodeInvertsEncode) {
  const std::string text = "津波警報 tsunami warning 3.5 m";
  Vocab v = build_vocab({text}, 1);
  const auto ids = v.encode(text);
  EXPECT_EQ(v.decode(ids), text);
}

TEST(Utf8, RejectsMalformedInput) {
  EXPECT_THROW(utf8_decode("\xC3"), std::invalid_argument);
  EXPECT_THROW(utf8_decode("\xC0\x80"), std::invalid_argument);
  EXPECT_EQ(utf8_length("aé世"), 3u);
}

TEST(EncodePair, RealLengthIsQPlusCPlusThree) {
  Vocab v = build_vocab({"abcde"}, 1);
  PackedInput p = encode_pair("ab", "cde", v, 10);
  EXPECT_EQ(p.real_length(), 8u);
  EXPECT_EQ(p.length(), 10u);
  EXPECT_EQ(p.token_ids[0], Vocab::kCls);
  EXPECT_EQ(p.token_ids[3], Vocab::kSep);
  EXPECT_EQ(p.token_ids[7], Vocab::kSep);
  EXPECT_EQ(p.context, (TokenRange{4, 7}));
  EXPECT_EQ(p.segment_ids, (std::vector<std::int32_t>{0, 0, 0, 0, 1, 1, 1, 1, 0, 0}));
  EXPECT_EQ(p.attention_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 1, 0, 0}));
}

TEST(EncodePair, EmptyQuestion) {
  Vocab v = build_vocab({"xyz"}, 1);
  PackedInput p = encode_pair("", "xyz", v, 6);
  EXPECT_EQ(p.real_length(), 6u);
  EXPECT_EQ(p.token_ids[1], Vocab::kSep);
  EXPECT_EQ(p.context.begin, 2u);
}

TEST(EncodePair, TruncatesContextOnlyFromTheRight) {
  Vocab v = build_vocab({"qa"}, 1);
  PackedInput p = encode_pair("qq", std::string(100, 'a'), v, 16);
  EXPECT_EQ(p.context.size(), 11u);
  EXPECT_EQ(p.real_length(), 16u);
  EXPECT_EQ(p.token_ids[1], v.id(U'q'));
  EXPECT_EQ(p.token_ids[2], v.id(U'q'));
  EXPECT_EQ(p.token_ids.back(), Vocab::kSep);
}

TEST(EncodePair, QuestionTooLongThrowsCapacityError) {
  Vocab v = build_vocab({"q"}, 1);
  EXPECT_THROW(encode_pair("qqqq", "q", v, 7), CapacityError);
  EXPECT_NO_THROW(encode_pair("qqqq", "q", v, 8));
}

TEST(EncodePair, PaddingIsAMaskedSuffix) {
  Vocab v = build_vocab({"abc"}, 1);
  PackedInput p = encode_pair("a", "bc", v, 12);
  bool seen_pad = false;
  for (std::size_t i = 0; i < p.length(); ++i) {
    if (p.attention_mask[i] == 0) seen_pad = true;
    if (seen_pad) {
      EXPECT_EQ(p.attention_mask[i], 0);
      EXPECT_EQ(p.token_ids[i], Vocab::kPad);
    }
  }
}

TEST(EncodePair, Deterministic) {
  Vocab v = build_vocab({"deterministic"}, 1);
  EXPECT_EQ(encode_pair("de", "terministic", v, 20), encode_pair("de", "terministic", v, 20));
}

TEST(AlignSpan, ContextStartAfterQuestion) {
  Vocab v = build_vocab({"abcdef"}, 1);
  PackedInput p = encode_pair("ab", "cdef", v, 16);
  EXPECT_EQ(align_span("cdef", 0, 1, p), (TokenSpan{4, 4}));
}

TEST(AlignSpan, WholeContext) {
  Vocab v = build_vocab({"abcdef"}, 1);
  PackedInput p = encode_pair("ab", "cdef", v, 16);
  EXPECT_EQ(align_span("cdef", 0, 4, p), (TokenSpan{p.context.begin, p.context.end - 1}));
}

TEST(AlignSpan, TruncatedRegionThrows) {
  Vocab v = build_vocab({"abcdef"}, 1);
  PackedInput p = encode_pair("ab", "cdefcdef", v, 8);  // keeps 3 context chars
  EXPECT_NO_THROW(align_span("cdefcdef", 0, 3, p));
  EXPECT_THROW(align_span("cdefcdef", 2, 4, p), UnrepresentableSpanError);
  EXPECT_THROW(align_span("cdefcdef", 3, 2, p), IndexError);
}

TEST(AlignSpan, ExtractedTokensReproduceAnswer) {
  const std::string ctx = "震度6強の地震が仙台で発生";
  Vocab v = build_vocab({ctx, "どこ"}, 1);
  PackedInput p = encode_pair("どこ", ctx, v, 64);
  const std::u32string u = utf8_decode(ctx);
  for (std::size_t s = 0; s < u.size(); ++s) {
    for (std::size_t e = s + 1; e <= u.size(); ++e) {
      TokenSpan t = align_span(ctx, s, e, p);
      std::vector<std::int32_t> ids(p.token_ids.begin() + t.start, p.token_ids.begin() + t.end + 1);
      EXPECT_EQ(v.decode(ids), utf8_encode(u.substr(s, e - s)));
    }
  }
}

}  // namespace
}  // namespace disaqa
