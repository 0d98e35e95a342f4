// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "disaqa/tensor.hpp"

namespace disaqa {

std::size_t QARecord::answer_end_char() const {
  return answer_start_char + utf8_length(answer_text);
}

void to_json(nlohmann::json& j, const QARecord& r) {
  j = {{"id", r.id},
       {"question", r.question},
       {"context", r.context},
       {"answer_text", r.answer_text},
       {"answer_start_char", r.answer_start_char}};
}

void from_json(const nlohmann::json& j, QARecord& r) {
  r.id = j.at("id").get<std::string>();
  r.question = j.at("question").get<std::string>();
  r.context = j.at("context").get<std::string>();
  r.answer_text = j.at("answer_text").get<std::string>();
  r.answer_start_char = j.at("answer_start_char").get<std::size_t>();
}

void validate_record(const QARecord& r) {
  const std::u32string ctx = utf8_decode(r.context);
  const std::u32string ans = utf8_decode(r.answer_text);
  if (ans.empty()) throw DatasetError("record '" + r.id + "': empty answer_text");
  if (r.answer_start_char + ans.size() > ctx.size() ||
      ctx.compare(r.answer_start_char, ans.size(), ans) != 0) {
    throw DatasetError("record '" + r.id + "': answer_text does not match context at char " +
                       std::to_string(r.answer_start_char));
  }
}

std::vector<QARecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset '" + path.string() + "'");
  std::vector<QARecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    QARecord r;
    try {
      r = nlohmann::json::parse(line).get<QARecord>();
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      validate_record(r);
    } catch (const DatasetError& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": record '" + r.id +
                         "': " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_jsonl(const std::vector<QARecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += nlohmann::json(r).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<QARecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot open '" + path.string() + "' for writing");
  out << to_jsonl(records);
}

namespace {

// Explicit draws so output does not depend on the standard library's
// distribution implementations.
std::size_t draw(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(rng, i)]);
}

struct Hazard {
  const char* name;
  const char* measure;  // printf pattern for the magnitude/level slot
  int lo, hi;           // integer range fed to the pattern
  bool tenths;          // value is lo..hi divided by 10
};

constexpr std::array<Hazard, 8> kHazards{{
    {"earthquake", "magnitude %s", 45, 79, true},
    {"flood", "water level %s m", 12, 69, true},
    {"typhoon", "wind speed %s m/s", 25, 65, false},
    {"volcanic eruption", "alert level %s", 2, 5, false},
    {"tsunami", "wave height %s m", 5, 99, true},
    {"landslide", "warning level %s", 1, 5, false},
    {"heavy rain", "rainfall %s mm", 80, 400, false},
    {"wildfire", "fire danger level %s", 2, 5, false},
}};

constexpr std::array<const char*, 24> kPlaces{
    "Sendai",    "Kobe",     "Osaka",    "Nagoya",   "Sapporo",  "Fukuoka",
    "Niigata",   "Kumamoto", "Hiroshima", "Okayama", "Kochi",    "Nagano",
    "Shizuoka",  "Akita",    "Morioka",  "Kagoshima", "Naha",    "Kanazawa",
    "Toyama",    "Matsuyama", "Oita",    "Miyazaki", "Fukushima", "Yokohama"};

constexpr std::array<const char*, 12> kActions{
    "move to higher ground",        "go to the nearest shelter",
    "stay away from the coast",     "take cover under a sturdy table",
    "avoid the river banks",        "stay indoors",
    "follow the evacuation route",  "keep a radio switched on",
    "turn off the gas supply",      "prepare an emergency kit",
    "check on elderly neighbors",   "boil drinking water"};

enum Slot : std::size_t { kType, kPlace, kLevel, kAction, kTime, kNumSlots };

struct Facts {
  std::string type, place, level, action, time;
  const std::string& get(std::size_t slot) const {
    switch (slot) {
      case kType: return type;
      case kPlace: return place;
      case kLevel: return level;
      case kAction: return action;
      default: return time;
    }
  }
};

// Each template writes every slot exactly once; {T} type, {P} place,
// {L} level, {A} action, {H} time.
constexpr std::array<const char*, 4> kContexts{
    "The {T} hit {P} at {H}. Officials reported {L}. Residents were told to {A}.",
    "At {H} the {T} was reported near {P}. Measured {L}. Everyone should {A}.",
    "Officials in {P} confirmed {L}. The {T} started at {H}. Please {A} now.",
    "Notice: {L} was recorded. People in {P} must {A}. The {T} began at {H}.",
};

constexpr std::array<std::array<const char*, 3>, kNumSlots> kQuestions{{
    {"What kind of disaster occurred?", "Which hazard was reported?",
     "What type of event hit the area?"},
    {"Where did it happen?", "Which city was affected?", "Where was the event reported?"},
    {"How strong was it?", "What level was measured?", "What reading did officials give?"},
    {"What should people do?", "What action is advised?", "What were residents told to do?"},
    {"When did it start?", "At what time was it reported?", "What time did it begin?"},
}};

std::string format_level(const Hazard& h, Rng& rng) {
  const int v = h.lo + static_cast<int>(draw(rng, static_cast<std::size_t>(h.hi - h.lo + 1)));
  char num[32];
  if (h.tenths) {
    std::snprintf(num, sizeof num, "%d.%d", v / 10, v % 10);
  } else {
    std::snprintf(num, sizeof num, "%d", v);
  }
  char out[64];
  std::snprintf(out, sizeof out, h.measure, num);
  return out;
}

std::string format_time(Rng& rng) {
  char out[8];
  std::snprintf(out, sizeof out, "%02d:%02d", static_cast<int>(draw(rng, 24)),
                static_cast<int>(draw(rng, 12) * 5));
  return out;
}

// Fills a template; records where the answer's code-point offset starts.
std::string render(const char* tmpl, const Facts& f, std::size_t answer_slot,
                   std::size_t& answer_start) {
  std::string out;
  for (const char* p = tmpl; *p; ++p) {
    if (*p == '{' && p[1] && p[2] == '}') {
      std::size_t slot = kNumSlots;
      switch (p[1]) {
        case 'T': slot = kType; break;
        case 'P': slot = kPlace; break;
        case 'L': slot = kLevel; break;
        case 'A': slot = kAction; break;
        case 'H': slot = kTime; break;
      }
      if (slot != kNumSlots) {
        if (slot == answer_slot) answer_start = utf8_length(out);
        out += f.get(slot);
        p += 2;
        continue;
      }
    }
    out += *p;
  }
  return out;
}

}  // namespace

std::vector<QARecord> generate_synthetic(std::size_t n, std::uint64_t seed,
                                         const std::string& template_set) {
  if (template_set != kDefaultTemplateSet) {
    throw std::invalid_argument("unknown template set '" + template_set + "'");
  }
  if (n == 0) throw std::invalid_argument("generate_synthetic: n must be >= 1");
  Rng rng(seed);
  std::vector<QARecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Round-robin over answer slot first, then template, then phrasing.
    const std::size_t slot = i % kNumSlots;
    const std::size_t tmpl = (i / kNumSlots) % kContexts.size();
    const std::size_t phrasing = (i / (kNumSlots * kContexts.size())) % 3;
    const Hazard& hz = kHazards[draw(rng, kHazards.size())];
    Facts f{hz.name, kPlaces[draw(rng, kPlaces.size())], format_level(hz, rng),
            kActions[draw(rng, kActions.size())], format_time(rng)};
    QARecord r;
    char id[48];
    std::snprintf(id, sizeof id, "syn-%llu-%05zu", static_cast<unsigned long long>(seed), i);
    r.id = id;
    r.question = kQuestions[slot][phrasing];
    r.context = render(kContexts[tmpl], f, slot, r.answer_start_char);
    r.answer_text = f.get(slot);
    out.push_back(std::move(r));
  }
  return out;
}

EncodedSet encode_records(const std::vector<QARecord>& records, const Vocab& vocab,
                          std::size_t max_len) {
  EncodedSet set;
  for (const auto& r : records) {
    PackedInput packed = encode_pair(r.question, r.context, vocab, max_len);
    try {
      TokenSpan gold = align_span(r.context, r.answer_start_char, r.answer_end_char(), packed);
      set.examples.push_back(
          {r.id, packed.padded_to(packed.real_length()), gold, r.context, r.answer_text});
    } catch (const UnrepresentableSpanError&) {
      ++set.dropped;
    }
  }
  if (set.dropped > 0) {
    spdlog::warn("dropped {} of {} records whose answers fall in truncated context", set.dropped,
                 records.size());
  }
  if (set.examples.empty() && !records.empty()) {
    throw DatasetError("all " + std::to_string(records.size()) +
                       " records were dropped by truncation at max_len " + std::to_string(max_len));
  }
  return set;
}

std::vector<Batch> batch_examples(const std::vector<Example>& examples, std::size_t micro_batch,
                                  std::uint64_t shuffle_seed) {
  if (micro_batch == 0) throw std::invalid_argument("micro_batch must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, shuffle_seed);
  std::vector<Batch> out;
  for (std::size_t b = 0; b < order.size(); b += micro_batch) {
    Batch batch;
    std::size_t longest = 0;
    const std::size_t stop = std::min(order.size(), b + micro_batch);
    for (std::size_t k = b; k < stop; ++k)
      longest = std::max(longest, examples[order[k]].input.real_length());
    for (std::size_t k = b; k < stop; ++k) {
      const Example& ex = examples[order[k]];
      batch.inputs.push_back(ex.input.padded_to(longest));
      batch.golds.push_back(ex.gold);
      batch.ids.push_back(ex.id);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

BatchPlan make_batches(const std::vector<QARecord>& records, const Vocab& vocab,
                       std::size_t max_len, std::size_t micro_batch, std::uint64_t shuffle_seed) {
  if (micro_batch == 0) throw std::invalid_argument("micro_batch must be >= 1");
  if (records.empty()) throw DatasetError("make_batches: no records");
  EncodedSet set = encode_records(records, vocab, max_len);
  return {batch_examples(set.examples, micro_batch, shuffle_seed), set.dropped};
}

Split split_dataset(const std::vector<QARecord>& records, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must lie in [0, 1)");
  }
  const std::size_t n = records.size();
  std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  if (n >= 2 && val_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, seed);
  // Keep the original relative order inside each side.
  std::vector<bool> is_val(n, false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
  Split s;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? s.val : s.train).push_back(records[i]);
  return s;
}

std::string span_text(const std::string& context, const PackedInput& packed, TokenSpan span) {
  if (!packed.context.contains(span.start) || !packed.context.contains(span.end) ||
      span.end < span.start) {
    throw IndexError("span_text: span outside the context zone");
  }
  const std::u32string ctx = utf8_decode(context);
  const std::size_t b = span.start - packed.context.begin;
  return utf8_encode(std::u32string_view(ctx).substr(b, span.end - span.start + 1));
}

std::vector<std::string> corpus_texts(const std::vector<QARecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    out.push_back(r.question);
    out.push_back(r.context);
  }
  return out;
}

}  // namespace disaqa
