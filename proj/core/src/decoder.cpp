#include "argex/decoder.hpp"

#include <algorithm>
#include <string>

#include "argex/error.hpp"

namespace argex {

using nn::Tape;
using nn::Var;

Var decode(Tape& t, Var h_en, const DependencyMatrix* dep, const ModelConfig& cfg,
           const nn::ParamStore& ps) {
  DepMasks masks;
  bool have_masks = false;
  if (cfg.bias_in_decoder && dep && cfg.gamma != 0.0) {
    masks = DepMasks::build(*dep);
    have_masks = masks.any_intra || masks.any_inter;
  }

  Var x = h_en;
  for (int i = 0; i < cfg.dec_layers; ++i) {
    const std::string p = "dec.L" + std::to_string(i);
    const std::string scope = cfg.per_layer_bias ? p + ".depbias." : "depbias.";
    Var normed = layernorm_affine(t, x, ps, p + ".ln1");
    Var self = multihead_attention(t, normed, normed, cfg, ps, p + ".self",
                                   have_masks ? &masks : nullptr, cfg.gamma, scope, nullptr,
                                   nullptr);
    x = t.add(x, self);
    Var normx = layernorm_affine(t, x, ps, p + ".lnx");
    Var cross = multihead_attention(t, normx, h_en, cfg, ps, p + ".cross", nullptr, 0.0, "",
                                    nullptr, nullptr);
    x = t.add(x, cross);
    Var normed2 = layernorm_affine(t, x, ps, p + ".ln2");
    Var hidden = t.tanh_op(linear(t, normed2, ps, p + ".ffn.w1", p + ".ffn.b1"));
    Var ffn = linear(t, hidden, ps, p + ".ffn.w2", p + ".ffn.b2");
    x = t.add(x, ffn);
  }
  return layernorm_affine(t, x, ps, "dec.final_ln");
}

Var eia_weights(Tape& t, const std::vector<Var>& attention, int trigger_pos, int slot_lo,
                int slot_hi) {
  if (attention.empty()) throw std::invalid_argument("eia_weights: no attention heads");
  if (slot_lo >= slot_hi) throw std::invalid_argument("eia_weights: empty slot range");
  std::vector<int> slot_rows;
  for (int r = slot_lo; r < slot_hi; ++r) slot_rows.push_back(r);

  Var a_t, a_s;
  for (std::size_t h = 0; h < attention.size(); ++h) {
    Var row_t = t.mean_rows(attention[h], {trigger_pos});
    Var row_s = t.mean_rows(attention[h], slot_rows);
    a_t = (h == 0) ? row_t : t.add(a_t, row_t);
    a_s = (h == 0) ? row_s : t.add(a_s, row_s);
  }
  const double inv_h = 1.0 / static_cast<double>(attention.size());
  a_t = t.scale(a_t, inv_h);
  a_s = t.scale(a_s, inv_h);
  return t.softmax_rows(t.mul(a_t, a_s));
}

Var eia_enhance(Tape& t, Var h_en, Var p, Var h_de, int slot_lo, int slot_hi, const nn::ParamStore& ps,
                bool disable_context) {
  const int dim = t.value(h_en).cols();
  Var c = disable_context ? t.input(nn::Tensor({1, dim})) : t.matmul(p, h_en);
  std::vector<int> slot_rows;
  for (int r = slot_lo; r < slot_hi; ++r) slot_rows.push_back(r);
  Var h_slot = t.mean_rows(h_de, slot_rows);
  return t.tanh_op(t.matmul(t.concat_cols(h_slot, c), t.param(ps, "eia.w1")));
}

std::pair<Var, Var> span_selectors(Tape& t, Var h_tilde, const nn::ParamStore& ps) {
  return {t.mul(h_tilde, t.param(ps, "span.w_start")), t.mul(h_tilde, t.param(ps, "span.w_end"))};
}

SpanDistributions span_distributions(Tape& t, Var h_de, Var phi_start, Var phi_end,
                                     const std::vector<std::uint8_t>& mask) {
  SpanDistributions out;
  Var s = t.transpose(t.matmul(h_de, t.transpose(phi_start)));
  Var e = t.transpose(t.matmul(h_de, t.transpose(phi_end)));
  out.start = t.masked_softmax_rows(s, mask);
  out.end = t.masked_softmax_rows(e, mask);
  return out;
}

SpanChoice select_span(const nn::Tensor& start_probs, const nn::Tensor& end_probs, int context_lo,
                       int context_hi, int max_span_len) {
  const int n = static_cast<int>(start_probs.size());
  if (end_probs.size() != start_probs.size())
    throw std::invalid_argument("select_span: distribution length mismatch");
  if (max_span_len < 1) throw std::invalid_argument("select_span: max_span_len must be >= 1");
  if (!(0 < context_lo && context_lo < context_hi && context_hi < n))
    throw DataError("select_span: empty or out-of-range context");

  SpanChoice best;
  best.lo = 0;
  best.hi = 0;
  best.score = start_probs[0] + end_probs[0];
  for (int m = context_lo; m < context_hi; ++m) {
    const int n_max = std::min(context_hi, m + max_span_len);
    for (int e = m + 1; e <= n_max; ++e) {
      const double score = start_probs[m] + end_probs[e];
      if (score > best.score) {
        best.lo = m;
        best.hi = e;
        best.score = score;
      }
    }
  }
  return best;
}

}  // namespace argex
