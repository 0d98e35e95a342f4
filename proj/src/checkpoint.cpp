// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

namespace disaqa {

namespace {

constexpr char kMagic[4] = {'D', 'Q', 'A', 'W'};
constexpr std::uint8_t kDtypeF64 = 1;

template <class U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = ckpt.config.dump();
  put<std::uint64_t>(out, cfg.size());
  out += cfg;
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto cfg_len = r.get<std::uint64_t>();
  ckpt.config = nlohmann::json::parse(r.take(cfg_len));
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.take(r.get<std::uint32_t>());
    if (r.get<std::uint8_t>() != kDtypeF64) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has an unsupported dtype");
    }
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint model_checkpoint(const QAModel& model, const Vocab& vocab, bool adapters_only) {
  Checkpoint ckpt;
  ckpt.config = {{"kind", adapters_only ? "adapters" : "full"},
                 {"model", model.config()},
                 {"train_mode", to_string(model.train_mode())},
                 {"vocab", vocab.to_json()}};
  for (auto& nt : model.named_parameters()) {
    if (adapters_only && param_group(nt.first) != ParamGroup::adapter) continue;
    ckpt.tensors.push_back(std::move(nt));
  }
  return ckpt;
}

void save_model(const std::filesystem::path& path, const QAModel& model, const Vocab& vocab,
                bool adapters_only) {
  save_checkpoint(path, model_checkpoint(model, vocab, adapters_only));
}

LoadedModel load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("kind", "full") != "full") {
    throw CheckpointError("'" + path.string() + "' holds adapters only; load a base model first");
  }
  const auto cfg = ckpt.config.at("model").get<ModelConfig>();
  QAModel model = QAModel::init(cfg, 0);
  const std::size_t expected = model.named_parameters().size();
  if (model.load_tensors(ckpt.tensors) != expected || ckpt.tensors.size() != expected) {
    throw CheckpointError("checkpoint '" + path.string() + "' does not match its model config");
  }
  model.set_train_mode(parse_train_mode(ckpt.config.value("train_mode", "lora")));
  return {std::move(model), Vocab::from_json(ckpt.config.at("vocab"))};
}

void apply_adapters(const std::filesystem::path& path, QAModel& model) {
  Checkpoint ckpt = load_checkpoint(path);
  for (const auto& [name, t] : ckpt.tensors) {
    if (param_group(name) != ParamGroup::adapter) {
      throw CheckpointError("adapter checkpoint contains non-adapter tensor '" + name + "'");
    }
  }
  if (model.load_tensors(ckpt.tensors) != ckpt.tensors.size()) {
    throw CheckpointError("adapter checkpoint '" + path.string() + "' names unknown tensors");
  }
}

}  // namespace disaqa
