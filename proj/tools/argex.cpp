#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "argex/bench.hpp"
#include "argex/error.hpp"
#include "argex/evaluate.hpp"
#include "argex/pipeline.hpp"
#include "argex/synth.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  argex::ModelConfig model;
  argex::TrainConfig train;
};

// Flat key-value config file; unknown keys are rejected. Precedence is
// command-line flag > config file > built-in default.
RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw argex::DataError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw argex::DataError(std::string("config file: ") + e.what());
  }
  if (!j.is_object()) throw argex::DataError("config file must be a flat JSON object");

  static const std::set<std::string> known = {
      "dim", "heads", "enc_layers", "dec_layers", "gamma", "span_threshold",
      "window_context", "window_prompt", "max_len", "bias_in_decoder",
      "duplicate_same_type", "per_layer_bias", "disable_eia",
      "steps", "batch_size", "learning_rate", "warmup_ratio", "max_grad_norm",
      "cross_attn_lr_mult", "seed"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw argex::DataError("config file: unknown key '" + key + "'");

  RunConfig c;
  auto geti = [&j](const char* k, int& out) { if (j.count(k)) out = j[k].get<int>(); };
  auto getd = [&j](const char* k, double& out) { if (j.count(k)) out = j[k].get<double>(); };
  auto getb = [&j](const char* k, bool& out) { if (j.count(k)) out = j[k].get<bool>(); };
  geti("dim", c.model.dim);
  geti("heads", c.model.heads);
  geti("enc_layers", c.model.enc_layers);
  geti("dec_layers", c.model.dec_layers);
  getd("gamma", c.model.gamma);
  geti("span_threshold", c.model.span_threshold);
  geti("window_context", c.model.window_context);
  geti("window_prompt", c.model.window_prompt);
  geti("max_len", c.model.max_len);
  getb("bias_in_decoder", c.model.bias_in_decoder);
  getb("duplicate_same_type", c.model.duplicate_same_type);
  getb("per_layer_bias", c.model.per_layer_bias);
  getb("disable_eia", c.model.disable_eia);
  geti("steps", c.train.steps);
  geti("batch_size", c.train.batch_size);
  getd("learning_rate", c.train.learning_rate);
  getd("warmup_ratio", c.train.warmup_ratio);
  getd("max_grad_norm", c.train.max_grad_norm);
  getd("cross_attn_lr_mult", c.train.cross_attn_lr_mult);
  if (j.count("seed")) c.train.seed = j["seed"].get<std::uint64_t>();
  return c;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw argex::DataError("cannot write '" + path + "'");
  out << content;
}

struct Overrides {
  std::optional<int> dim, heads, enc_layers, dec_layers, span_threshold;
  std::optional<int> window_context, window_prompt, max_len;
  std::optional<double> gamma, learning_rate, warmup_ratio, max_grad_norm, cross_attn_lr_mult;
  std::optional<int> steps, batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<bool> bias_in_decoder, duplicate_same_type, per_layer_bias, disable_eia;

  void apply(RunConfig& c) const {
    if (dim) c.model.dim = *dim;
    if (heads) c.model.heads = *heads;
    if (enc_layers) c.model.enc_layers = *enc_layers;
    if (dec_layers) c.model.dec_layers = *dec_layers;
    if (gamma) c.model.gamma = *gamma;
    if (span_threshold) c.model.span_threshold = *span_threshold;
    if (window_context) c.model.window_context = *window_context;
    if (window_prompt) c.model.window_prompt = *window_prompt;
    if (max_len) c.model.max_len = *max_len;
    if (bias_in_decoder) c.model.bias_in_decoder = *bias_in_decoder;
    if (duplicate_same_type) c.model.duplicate_same_type = *duplicate_same_type;
    if (per_layer_bias) c.model.per_layer_bias = *per_layer_bias;
    if (disable_eia) c.model.disable_eia = *disable_eia;
    if (steps) c.train.steps = *steps;
    if (batch_size) c.train.batch_size = *batch_size;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (warmup_ratio) c.train.warmup_ratio = *warmup_ratio;
    if (max_grad_norm) c.train.max_grad_norm = *max_grad_norm;
    if (cross_attn_lr_mult) c.train.cross_attn_lr_mult = *cross_attn_lr_mult;
    if (seed) c.train.seed = *seed;
  }
};

void add_override_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--dim", ov.dim, "model dimension");
  cmd->add_option("--heads", ov.heads, "attention heads");
  cmd->add_option("--enc-layers", ov.enc_layers, "encoder layers");
  cmd->add_option("--dec-layers", ov.dec_layers, "decoder layers");
  cmd->add_option("--gamma", ov.gamma, "dependency bias scale");
  cmd->add_option("--span-threshold", ov.span_threshold, "max predicted span length");
  cmd->add_option("--window-context", ov.window_context, "context window size d1");
  cmd->add_option("--window-prompt", ov.window_prompt, "prompt window size d2");
  cmd->add_option("--max-len", ov.max_len, "max encoder sequence length");
  cmd->add_option("--bias-in-decoder", ov.bias_in_decoder, "apply dependency bias in decoder");
  cmd->add_option("--duplicate-same-type", ov.duplicate_same_type,
                  "repeat prompts for same-type events");
  cmd->add_option("--per-layer-bias", ov.per_layer_bias, "per-layer bias parameters");
  cmd->add_option("--disable-eia", ov.disable_eia, "zero out the aggregated context vector");
  cmd->add_option("--steps", ov.steps, "training steps");
  cmd->add_option("--batch-size", ov.batch_size, "batch size");
  cmd->add_option("--learning-rate", ov.learning_rate, "base learning rate");
  cmd->add_option("--warmup-ratio", ov.warmup_ratio, "linear warmup fraction");
  cmd->add_option("--max-grad-norm", ov.max_grad_norm, "gradient clipping norm");
  cmd->add_option("--cross-attn-lr-mult", ov.cross_attn_lr_mult,
                  "cross-attention learning-rate multiplier");
  cmd->add_option("--seed", ov.seed, "RNG seed");
}

int run(int argc, char** argv) {
  CLI::App app{"multi-event document-level argument extraction toolkit"};
  app.require_subcommand(1);

  std::string config_path, corpus_path, templates_path, checkpoint_path, pred_path;
  std::string out_path, templates_out, log_path, gen_config_path, mode = "multi";
  int repeats = 100;
  int samples = 3;
  double eps = 1e-5, tolerance = 1e-4;
  Overrides ov;

  auto* gen = app.add_subcommand("gen-corpus", "generate a seeded synthetic corpus");
  gen->add_option("--gen-config", gen_config_path, "generator config JSON");
  gen->add_option("--seed", ov.seed, "RNG seed");
  gen->add_option("--out", out_path, "corpus JSONL output")->required();
  gen->add_option("--templates-out", templates_out, "template JSON output");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  train_cmd->add_option("--templates", templates_path, "template JSON")->required();
  train_cmd->add_option("--config", config_path, "run config JSON");
  train_cmd->add_option("--out", out_path, "checkpoint output")->required();
  train_cmd->add_option("--log", log_path, "training log JSONL output");
  add_override_options(train_cmd, ov);

  auto* infer = app.add_subcommand("infer", "extract arguments with a trained model");
  infer->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  infer->add_option("--templates", templates_path, "template JSON")->required();
  infer->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  infer->add_option("--mode", mode, "multi | single_loop");
  infer->add_option("--out", out_path, "predictions JSONL output")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold");
  eval_cmd->add_option("--pred", pred_path, "predictions JSONL")->required();
  eval_cmd->add_option("--corpus", corpus_path, "gold corpus JSONL")->required();
  eval_cmd->add_option("--out", out_path, "metrics JSON output")->required();

  auto* errors_cmd = app.add_subcommand("errors", "five-category error report");
  errors_cmd->add_option("--pred", pred_path, "predictions JSONL")->required();
  errors_cmd->add_option("--corpus", corpus_path, "gold corpus JSONL")->required();
  errors_cmd->add_option("--out", out_path, "error report JSON output")->required();

  auto* bench_cmd = app.add_subcommand("bench", "multi vs single_loop timing");
  bench_cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  bench_cmd->add_option("--templates", templates_path, "template JSON")->required();
  bench_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  bench_cmd->add_option("--repeats", repeats, "timed repetitions per bucket");
  bench_cmd->add_option("--out", out_path, "timing report JSON output")->required();

  auto* bias_cmd = app.add_subcommand("bias-summary", "mean attention bias per layer/category");
  bias_cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  bias_cmd->add_option("--templates", templates_path, "template JSON")->required();
  bias_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  bias_cmd->add_option("--out", out_path, "summary JSON output")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  grad_cmd->add_option("--seed", ov.seed, "RNG seed");
  grad_cmd->add_option("--eps", eps, "finite-difference step");
  grad_cmd->add_option("--samples", samples, "sampled coordinates per tensor");
  grad_cmd->add_option("--tolerance", tolerance, "max relative error to pass");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    argex::GenConfig cfg =
        gen_config_path.empty() ? argex::GenConfig{} : argex::load_gen_config(gen_config_path);
    const std::uint64_t seed = ov.seed.value_or(1);
    argex::Corpus corpus = argex::generate_synthetic(cfg, seed);
    argex::save_corpus(corpus, out_path);
    if (!templates_out.empty()) {
      const auto types = cfg.types.empty() ? argex::default_type_inventory() : cfg.types;
      json jt = json::object();
      for (const auto& spec : types) jt[spec.type] = spec.template_text;
      write_file(templates_out, jt.dump(2) + "\n");
    }
    std::cout << "wrote " << corpus.docs.size() << " documents to " << out_path << "\n";
    return kExitOk;
  }

  if (train_cmd->parsed()) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    ov.apply(cfg);
    argex::Corpus corpus = argex::load_corpus(corpus_path);
    argex::TemplateRegistry reg = argex::load_templates(templates_path);
    std::ofstream log;
    if (!log_path.empty()) {
      log.open(log_path);
      if (!log) throw argex::DataError("cannot write log '" + log_path + "'");
    }
    argex::Checkpoint ck =
        argex::train(corpus, reg, cfg.model, cfg.train, log.is_open() ? &log : nullptr);
    ck.save(out_path);
    std::cout << "trained " << cfg.train.steps << " steps; checkpoint at " << out_path << "\n";
    return kExitOk;
  }

  if (infer->parsed()) {
    argex::Corpus corpus = argex::load_corpus(corpus_path);
    argex::TemplateRegistry reg = argex::load_templates(templates_path);
    argex::Checkpoint ck = argex::Checkpoint::load(checkpoint_path);
    auto preds = argex::predict_corpus(corpus, reg, ck, argex::predict_mode_from(mode));
    write_file(out_path, argex::predictions_to_jsonl(preds));
    std::cout << "wrote predictions to " << out_path << "\n";
    return kExitOk;
  }

  if (eval_cmd->parsed()) {
    auto preds = argex::load_predictions(pred_path);
    argex::Corpus gold = argex::load_corpus(corpus_path);
    argex::Metrics m = argex::evaluate(preds, gold);
    write_file(out_path, argex::metrics_to_json(m) + "\n");
    std::cout << "arg_i_f1=" << m.arg_i.f1() << " arg_c_f1=" << m.arg_c.f1() << "\n";
    return kExitOk;
  }

  if (errors_cmd->parsed()) {
    auto preds = argex::load_predictions(pred_path);
    argex::Corpus gold = argex::load_corpus(corpus_path);
    argex::ErrorReport report = argex::error_report(preds, gold);
    write_file(out_path, argex::error_report_to_json(report) + "\n");
    std::cout << "wrote error report to " << out_path << "\n";
    return kExitOk;
  }

  if (bench_cmd->parsed()) {
    argex::Corpus corpus = argex::load_corpus(corpus_path);
    argex::TemplateRegistry reg = argex::load_templates(templates_path);
    argex::Checkpoint ck = argex::Checkpoint::load(checkpoint_path);
    argex::BenchReport report = argex::bench(corpus, reg, ck, repeats);
    write_file(out_path, argex::bench_report_to_json(report) + "\n");
    std::cout << "wrote timing report to " << out_path << "\n";
    return kExitOk;
  }

  if (bias_cmd->parsed()) {
    argex::Corpus corpus = argex::load_corpus(corpus_path);
    argex::TemplateRegistry reg = argex::load_templates(templates_path);
    argex::Checkpoint ck = argex::Checkpoint::load(checkpoint_path);
    auto rows = argex::export_bias_summary(corpus, reg, ck);
    write_file(out_path, argex::bias_summary_to_json(rows) + "\n");
    std::cout << "wrote bias summary to " << out_path << "\n";
    return kExitOk;
  }

  if (grad_cmd->parsed()) {
    const auto report = argex::model_grad_check(ov.seed.value_or(7), eps, samples);
    std::cout << "max_rel_err=" << report.max_rel_err << " coords=" << report.coords_checked
              << " worst=" << report.worst_param << "[" << report.worst_coord << "]\n";
    if (report.max_rel_err <= tolerance) return kExitOk;
    std::cerr << "gradient check failed tolerance " << tolerance << "\n";
    return kExitNumeric;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const argex::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const argex::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
