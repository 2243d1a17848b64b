#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "argex/corpus.hpp"
#include "argex/decoder.hpp"
#include "argex/matching.hpp"
#include "argex/model.hpp"
#include "argex/synth.hpp"

namespace argex {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double warmup_ratio = 0.1;
  double max_grad_norm = 5.0;
  double cross_attn_lr_mult = 1.5;
  std::uint64_t seed = 1;
  void validate() const;
};

struct ForwardStats {
  long long encoder_passes = 0;
};

/// Trains with Adam, linear warmup then linear decay, global gradient-norm
/// clipping, and the cross-attention learning-rate multiplier. Writes one
/// JSON line {"step","loss","lr"} per step to the log stream if given.
/// Deterministic for a fixed seed.
Checkpoint train(const Corpus& corpus, const TemplateRegistry& reg, const ModelConfig& mcfg,
                 const TrainConfig& tcfg, std::ostream* log = nullptr);

/// A span prediction in original document coordinates; an empty span means
/// the slot is unfilled.
struct Prediction {
  std::string doc_id;
  std::string event_id;
  std::string role;
  Span span;
};

enum class PredictMode { Multi, SingleLoop };
PredictMode predict_mode_from(const std::string& name);

std::vector<Prediction> predict(const Document& doc, const TemplateRegistry& reg,
                                const Checkpoint& ck, PredictMode mode,
                                ForwardStats* stats = nullptr);
std::vector<Prediction> predict_corpus(const Corpus& corpus, const TemplateRegistry& reg,
                                       const Checkpoint& ck, PredictMode mode,
                                       ForwardStats* stats = nullptr);

// Prediction JSONL: {"doc_id","event_id","role","start","end"}, empty spans omitted.
std::string predictions_to_jsonl(const std::vector<Prediction>& preds);
std::vector<Prediction> parse_predictions_jsonl(const std::string& text);
std::vector<Prediction> load_predictions(const std::string& path);

/// Whole-model gradient check: builds a seeded two-event toy instance and a
/// small model, then runs central finite differences over the full loss.
nn::GradCheckReport model_grad_check(std::uint64_t seed, double eps = 1e-5,
                                     int samples_per_tensor = 3);

struct BiasSummaryRow {
  int layer = 0;
  std::string category;  // "intra" | "inter"
  double mean_bias = 0.0;
};

/// Mean applied bias (gamma * bias_ij) per encoder layer and dependency
/// category over every instance in the corpus, heads and cells included.
std::vector<BiasSummaryRow> export_bias_summary(const Corpus& corpus, const TemplateRegistry& reg,
                                                const Checkpoint& ck);
std::string bias_summary_to_json(const std::vector<BiasSummaryRow>& rows);

}  // namespace argex
