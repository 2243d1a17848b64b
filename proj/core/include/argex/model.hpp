#pragma once

#include <cstdint>
#include <string>

#include "argex/assembly.hpp"
#include "argex/params.hpp"

namespace argex {

struct ModelConfig {
  int dim = 48;
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  double gamma = 0.01;       // dependency-bias scale
  int span_threshold = 10;   // max predicted span length
  int window_context = 250;  // d1
  int window_prompt = 250;   // d2
  int max_len = 500;
  bool bias_in_decoder = false;      // apply the dependency bias in decoder self-attention
  bool duplicate_same_type = false;  // one prompt per event instead of per distinct type
  bool per_layer_bias = false;       // separate bias parameters per layer
  bool disable_eia = false;          // replace the aggregated context vector with zeros

  int head_dim() const { return dim / heads; }
  int ffn_dim() const { return 2 * dim; }
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Builds the full trainable parameter set. Weights are N(0, 0.02); biases,
/// gains-1, and all dependency-bias parameters start at zero so training
/// begins at vanilla attention. Decoder cross-attention parameters carry the
/// given learning-rate multiplier.
nn::ParamStore init_model_params(const ModelConfig& cfg, int vocab_size, std::uint64_t seed,
                                 double cross_attn_lr_mult = 1.5);

struct Checkpoint {
  int format_version = 1;
  ModelConfig config;
  std::vector<std::string> vocab_tokens;
  int vocab_max_events = 0;
  nn::ParamStore params;

  Vocabulary vocab() const { return Vocabulary::from_tokens(vocab_tokens, vocab_max_events); }
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace argex
