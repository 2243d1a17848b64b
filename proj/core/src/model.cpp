#include "argex/model.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"
#include "argex/rng.hpp"

namespace argex {

using nlohmann::json;

void ModelConfig::validate() const {
  if (dim < 1 || heads < 1 || dim % heads != 0)
    throw DataError("model config: dim must be a positive multiple of heads");
  if (enc_layers < 1 || dec_layers < 1)
    throw DataError("model config: need at least one encoder and one decoder layer");
  if (gamma < 0.0) throw DataError("model config: gamma must be >= 0");
  if (span_threshold < 1) throw DataError("model config: span_threshold must be >= 1");
  if (window_context < 1 || window_prompt < 1 || window_context + window_prompt > max_len)
    throw DataError("model config: need window_context + window_prompt <= max_len");
}

std::string ModelConfig::to_json() const {
  json j;
  j["dim"] = dim;
  j["heads"] = heads;
  j["enc_layers"] = enc_layers;
  j["dec_layers"] = dec_layers;
  j["gamma"] = gamma;
  j["span_threshold"] = span_threshold;
  j["window_context"] = window_context;
  j["window_prompt"] = window_prompt;
  j["max_len"] = max_len;
  j["bias_in_decoder"] = bias_in_decoder;
  j["duplicate_same_type"] = duplicate_same_type;
  j["per_layer_bias"] = per_layer_bias;
  j["disable_eia"] = disable_eia;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  c.dim = j.at("dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.span_threshold = j.at("span_threshold").get<int>();
  c.window_context = j.at("window_context").get<int>();
  c.window_prompt = j.at("window_prompt").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.bias_in_decoder = j.at("bias_in_decoder").get<bool>();
  c.duplicate_same_type = j.at("duplicate_same_type").get<bool>();
  c.per_layer_bias = j.at("per_layer_bias").get<bool>();
  c.disable_eia = j.at("disable_eia").get<bool>();
  c.validate();
  return c;
}

namespace {

void add_attention_params(nn::ParamStore& ps, const std::string& prefix, int dim, Rng& rng,
                          double lr_mult = 1.0) {
  ps.add(prefix + ".wq", nn::gaussian(dim, dim, 0.02, rng), lr_mult);
  ps.add(prefix + ".bq", nn::Tensor({1, dim}), lr_mult);
  ps.add(prefix + ".wk", nn::gaussian(dim, dim, 0.02, rng), lr_mult);
  ps.add(prefix + ".bk", nn::Tensor({1, dim}), lr_mult);
  ps.add(prefix + ".wv", nn::gaussian(dim, dim, 0.02, rng), lr_mult);
  ps.add(prefix + ".bv", nn::Tensor({1, dim}), lr_mult);
  ps.add(prefix + ".wo", nn::gaussian(dim, dim, 0.02, rng), lr_mult);
  ps.add(prefix + ".bo", nn::Tensor({1, dim}), lr_mult);
}

void add_layernorm_params(nn::ParamStore& ps, const std::string& prefix, int dim) {
  nn::Tensor gain({1, dim});
  gain.fill(1.0);
  ps.add(prefix + ".gain", std::move(gain));
  ps.add(prefix + ".bias", nn::Tensor({1, dim}));
}

void add_ffn_params(nn::ParamStore& ps, const std::string& prefix, int dim, int hidden, Rng& rng) {
  ps.add(prefix + ".w1", nn::gaussian(dim, hidden, 0.02, rng));
  ps.add(prefix + ".b1", nn::Tensor({1, hidden}));
  ps.add(prefix + ".w2", nn::gaussian(hidden, dim, 0.02, rng));
  ps.add(prefix + ".b2", nn::Tensor({1, dim}));
}

void add_bias_params(nn::ParamStore& ps, const std::string& scope, int dk) {
  ps.add(scope + "intra.w", nn::Tensor({dk, dk}));
  ps.add(scope + "intra.b", nn::Tensor({1, 1}));
  ps.add(scope + "inter.w", nn::Tensor({dk, dk}));
  ps.add(scope + "inter.b", nn::Tensor({1, 1}));
}

}  // namespace

nn::ParamStore init_model_params(const ModelConfig& cfg, int vocab_size, std::uint64_t seed,
                                 double cross_attn_lr_mult) {
  cfg.validate();
  if (vocab_size < 2) throw DataError("vocabulary too small to build a model");
  Rng rng(seed);
  nn::ParamStore ps;
  ps.add("embed.tok", nn::gaussian(vocab_size, cfg.dim, 0.02, rng));
  ps.add("embed.pos", nn::gaussian(cfg.max_len, cfg.dim, 0.02, rng));

  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "enc.L" + std::to_string(i);
    add_layernorm_params(ps, p + ".ln1", cfg.dim);
    add_attention_params(ps, p + ".attn", cfg.dim, rng);
    add_layernorm_params(ps, p + ".ln2", cfg.dim);
    add_ffn_params(ps, p + ".ffn", cfg.dim, cfg.ffn_dim(), rng);
    if (cfg.per_layer_bias) add_bias_params(ps, p + ".depbias.", cfg.head_dim());
  }
  add_layernorm_params(ps, "enc.final_ln", cfg.dim);

  for (int i = 0; i < cfg.dec_layers; ++i) {
    const std::string p = "dec.L" + std::to_string(i);
    add_layernorm_params(ps, p + ".ln1", cfg.dim);
    add_attention_params(ps, p + ".self", cfg.dim, rng);
    add_layernorm_params(ps, p + ".lnx", cfg.dim);
    add_attention_params(ps, p + ".cross", cfg.dim, rng, cross_attn_lr_mult);
    add_layernorm_params(ps, p + ".ln2", cfg.dim);
    add_ffn_params(ps, p + ".ffn", cfg.dim, cfg.ffn_dim(), rng);
    if (cfg.per_layer_bias && cfg.bias_in_decoder)
      add_bias_params(ps, p + ".depbias.", cfg.head_dim());
  }
  add_layernorm_params(ps, "dec.final_ln", cfg.dim);

  if (!cfg.per_layer_bias) add_bias_params(ps, "depbias.", cfg.head_dim());

  ps.add("eia.w1", nn::gaussian(2 * cfg.dim, cfg.dim, 0.02, rng));
  ps.add("span.w_start", nn::gaussian(1, cfg.dim, 0.02, rng));
  ps.add("span.w_end", nn::gaussian(1, cfg.dim, 0.02, rng));
  return ps;
}

void Checkpoint::save(const std::string& path) const {
  json j;
  j["format_version"] = format_version;
  j["config"] = json::parse(config.to_json());
  j["vocab"] = {{"tokens", vocab_tokens}, {"max_events", vocab_max_events}};
  json jp = json::object();
  for (const auto& [name, entry] : params.entries()) {
    json je;
    je["shape"] = entry.value.shape();
    std::vector<double> values(entry.value.data(), entry.value.data() + entry.value.size());
    je["values"] = values;
    je["lr_mult"] = entry.lr_mult;
    jp[name] = std::move(je);
  }
  j["params"] = std::move(jp);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << j.dump();
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint parse: ") + e.what());
  }
  Checkpoint ck;
  ck.format_version = j.at("format_version").get<int>();
  if (ck.format_version != 1) {
    std::ostringstream os;
    os << "unsupported checkpoint format version " << ck.format_version;
    throw DataError(os.str());
  }
  ck.config = ModelConfig::from_json(j.at("config").dump());
  ck.vocab_tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
  ck.vocab_max_events = j.at("vocab").at("max_events").get<int>();
  for (const auto& [name, je] : j.at("params").items()) {
    nn::Tensor t(je.at("shape").get<std::vector<int>>(), je.at("values").get<std::vector<double>>());
    ck.params.add(name, std::move(t), je.at("lr_mult").get<double>());
  }
  return ck;
}

}  // namespace argex
