// Copyright 2026 The disaqa Authors
// SPDX-License-Identifier: Apache-2.0

#include "disaqa/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "disaqa/checkpoint.hpp"
#include "disaqa/data.hpp"
#include "disaqa/diagnostics.hpp"
#include "disaqa/metrics.hpp"
#include "disaqa/training.hpp"

namespace disaqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::uint64_t seed = 42;
  std::string preset = "toy";
  std::string mode = "lora";
  std::string data;
  std::string ckpt;
  std::string predictions;
  std::string out;
  std::size_t n = 1000;
  std::size_t max_len = 384;
  std::size_t vocab_size = 128;
  std::optional<double> dropout;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

json grad_report_json(const GradReport& r) {
  return {{"max_rel_error", r.max_rel_error},
          {"worst_param", r.worst_param},
          {"checked_elements", r.checked_elements},
          {"per_param_errors", r.per_param_errors},
          {"analytic_norms", r.analytic_norms},
          {"tolerance", kGradTolerance},
          {"passed", r.max_rel_error < kGradTolerance}};
}

int gen_data(const Options& o, std::ostream& out) {
  emit(to_jsonl(generate_synthetic(o.n, o.seed)), o.out, out);
  return kExitOk;
}

int train(const Options& o, bool seed_given, std::ostream& out) {
  TrainConfig cfg;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw std::runtime_error("cannot open config '" + o.config + "'");
    cfg = json::parse(f).get<TrainConfig>();
  }
  if (seed_given || o.config.empty()) cfg.seed = o.seed;

  const auto records = load_dataset(o.data);
  if (records.empty()) throw DatasetError("dataset '" + o.data + "' is empty");
  const Split split = split_dataset(records, 0.1, cfg.seed);
  if (split.val.empty()) throw DatasetError("need at least 2 records for a train/val split");
  const Vocab vocab = build_vocab(corpus_texts(split.train), 1);

  ModelConfig mcfg = ModelConfig::preset(o.preset, vocab.size());
  if (o.dropout) {
    mcfg.encoder.dropout_rate = *o.dropout;
    mcfg.lora.dropout_rate = *o.dropout;
  }
  if (o.max_len > mcfg.encoder.max_position) {
    throw UsageError("--max-len " + std::to_string(o.max_len) + " exceeds the preset's " +
                     std::to_string(mcfg.encoder.max_position) + " positions");
  }
  const EncodedSet tr = encode_records(split.train, vocab, o.max_len);
  const EncodedSet va = encode_records(split.val, vocab, o.max_len);

  QAModel model = QAModel::init(mcfg, cfg.seed);
  model.set_train_mode(parse_train_mode(o.mode));

  const fs::path dir = o.out.empty() ? fs::path("run") : fs::path(o.out);
  fs::create_directories(dir);
  FitOptions fo;
  fo.checkpoint_dir = dir;
  fo.vocab = &vocab;
  TrainingReport report = fit(model, tr.examples, va.examples, cfg, fo);
  report.dropped_train = tr.dropped;
  report.dropped_val = va.dropped;

  save_model(dir / "model.dqaw", model, vocab);
  save_model(dir / "adapters.dqaw", model, vocab, true);
  emit(pretty(json(report.best_metrics())), (dir / "metrics.json").string(), out);
  json rep = report;
  rep["config"] = cfg;
  emit(pretty(rep), (dir / "training_report.json").string(), out);
  out << pretty(rep);
  return kExitOk;
}

std::map<std::string, TokenSpan> load_predictions(const std::string& path,
                                                  std::map<std::string, std::string>& texts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions '" + path + "'");
  std::map<std::string, TokenSpan> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      out[id] = {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
      if (j.contains("text")) texts[id] = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

int eval(const Options& o, std::ostream& out) {
  if (o.ckpt.empty() == o.predictions.empty()) {
    throw UsageError("eval needs exactly one of --ckpt or --predictions");
  }
  const auto records = load_dataset(o.data);
  if (records.empty()) throw DatasetError("dataset '" + o.data + "' is empty");
  MetricsReport report;
  if (!o.ckpt.empty()) {
    const LoadedModel lm = load_model(o.ckpt);
    report = evaluate_model(lm.model, encode_records(records, lm.vocab, o.max_len).examples).metrics;
  } else {
    // Token positions depend only on character counts, so any vocabulary
    // reproduces the gold packing.
    const Vocab vocab = build_vocab(corpus_texts(records), 1);
    const EncodedSet set = encode_records(records, vocab, o.max_len);
    std::map<std::string, std::string> texts;
    const auto preds = load_predictions(o.predictions, texts);
    std::vector<TokenSpan> p, g;
    std::vector<std::string> pt, gt;
    for (const auto& ex : set.examples) {
      auto it = preds.find(ex.id);
      if (it == preds.end()) throw std::runtime_error("no prediction for record '" + ex.id + "'");
      p.push_back(it->second);
      g.push_back(ex.gold);
      auto tt = texts.find(ex.id);
      pt.push_back(tt != texts.end() ? tt->second : span_text(ex.context, ex.input, it->second));
      gt.push_back(ex.answer_text);
    }
    report = evaluate(p, g, pt, gt);
  }
  emit(pretty(json(report)), o.out, out);
  return kExitOk;
}

int predict(const Options& o, std::ostream& out) {
  const LoadedModel lm = load_model(o.ckpt);
  std::string lines;
  for (const auto& r : load_dataset(o.data)) {
    const PackedInput packed = encode_pair(r.question, r.context, lm.vocab, o.max_len);
    const SpanPrediction p = lm.model.predict(packed);
    lines += json{{"id", r.id},
                  {"start", p.start},
                  {"end", p.end},
                  {"text", span_text(r.context, packed, {p.start, p.end})}}
                 .dump();
    lines += '\n';
  }
  emit(lines, o.out, out);
  return kExitOk;
}

int count_params_cmd(const Options& o, std::ostream& out) {
  const ModelConfig cfg = ModelConfig::preset(o.preset, o.vocab_size);
  const auto layout = model_layout(cfg);
  json j = count_params(layout, parse_train_mode(o.mode));
  j["preset"] = o.preset;
  j["mode"] = o.mode;
  emit(pretty(j), o.out, out);
  return kExitOk;
}

int grad_check_cmd(const Options& o, std::ostream& out) {
  const GradReport r = model_grad_check(o.seed);
  emit(pretty(grad_report_json(r)), o.out, out);
  return r.max_rel_error < kGradTolerance ? kExitOk : kExitRuntime;
}

void use_stderr_logging() {
  if (!spdlog::get("disaqa")) spdlog::set_default_logger(spdlog::stderr_color_st("disaqa"));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  use_stderr_logging();
  Options o;
  CLI::App app{"Extractive disaster-QA with LoRA adapters", "disaqa"};
  app.require_subcommand(1, 1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic JSONL dataset");
  gen->add_option("--n", o.n, "Number of records")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--out", o.out, "Output file (default: stdout)");

  auto* tr = app.add_subcommand("train", "Train and write checkpoints plus reports");
  tr->add_option("--data", o.data, "Training JSONL")->required();
  tr->add_option("--config", o.config, "TrainConfig JSON");
  auto* tr_seed = tr->add_option("--seed", o.seed, "Seed (overrides the config)");
  tr->add_option("--preset", o.preset, "Model preset")->check(CLI::IsMember({"toy", "paper-scale"}));
  tr->add_option("--mode", o.mode, "Trainable set")->check(CLI::IsMember({"lora", "full"}));
  tr->add_option("--dropout", o.dropout, "Encoder and adapter dropout (default: the preset's)")
      ->check(CLI::Range(0.0, 0.99));
  tr->add_option("--max-len", o.max_len, "Packed sequence length");
  tr->add_option("--out", o.out, "Output directory (default: run)");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint or a predictions file");
  ev->add_option("--data", o.data, "Gold JSONL")->required();
  ev->add_option("--ckpt", o.ckpt, "Full model checkpoint");
  ev->add_option("--predictions", o.predictions, "Predictions JSONL (metric-only mode)");
  ev->add_option("--max-len", o.max_len, "Packed sequence length");
  ev->add_option("--out", o.out, "Report file (default: stdout)");

  auto* pr = app.add_subcommand("predict", "Write span predictions as JSONL");
  pr->add_option("--ckpt", o.ckpt, "Full model checkpoint")->required();
  pr->add_option("--data", o.data, "Input JSONL")->required();
  pr->add_option("--max-len", o.max_len, "Packed sequence length");
  pr->add_option("--out", o.out, "Output file (default: stdout)");

  auto* cp = app.add_subcommand("count-params", "Report total and trainable parameters");
  cp->add_option("--preset", o.preset, "Model preset")->check(CLI::IsMember({"toy", "paper-scale"}));
  cp->add_option("--mode", o.mode, "Trainable set")->check(CLI::IsMember({"lora", "full"}));
  cp->add_option("--vocab-size", o.vocab_size, "Vocabulary size for the toy preset");
  cp->add_option("--out", o.out, "Report file (default: stdout)");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full model");
  gc->add_option("--seed", o.seed, "Seed");
  gc->add_option("--out", o.out, "Report file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return gen_data(o, out);
    if (tr->parsed()) return train(o, tr_seed->count() > 0, out);
    if (ev->parsed()) return eval(o, out);
    if (pr->parsed()) return predict(o, out);
    if (cp->parsed()) return count_params_cmd(o, out);
    return grad_check_cmd(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace disaqa::cli
