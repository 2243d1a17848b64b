#include "argex/encoder.hpp"

#include <cmath>
#include <numeric>

#include "argex/error.hpp"

namespace argex {

using nn::Tape;
using nn::Var;

DepMasks DepMasks::build(const DependencyMatrix& dep) {
  const int n = dep.size();
  DepMasks m;
  m.intra = nn::Tensor({n, n});
  m.inter = nn::Tensor({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (dep.at(i, j) == Dep::Intra) {
        m.intra.at(i, j) = 1.0;
        m.any_intra = true;
      } else if (dep.at(i, j) == Dep::Inter) {
        m.inter.at(i, j) = 1.0;
        m.any_inter = true;
      }
    }
  }
  return m;
}

Var layernorm_affine(Tape& t, Var x, const nn::ParamStore& ps, const std::string& prefix) {
  Var normed = t.layernorm(x);
  return t.add_rowvec(t.mul_rowvec(normed, t.param(ps, prefix + ".gain")),
                      t.param(ps, prefix + ".bias"));
}

Var linear(Tape& t, Var x, const nn::ParamStore& ps, const std::string& w, const std::string& b) {
  return t.add_rowvec(t.matmul(x, t.param(ps, w)), t.param(ps, b));
}

Var multihead_attention(Tape& t, Var q_input, Var kv_input, const ModelConfig& cfg,
                        const nn::ParamStore& ps, const std::string& prefix, const DepMasks* masks,
                        double gamma, const std::string& bias_scope,
                        std::vector<Var>* attn_out, BiasLayerStats* stats) {
  const int dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var Q = linear(t, q_input, ps, prefix + ".wq", prefix + ".bq");
  Var K = linear(t, kv_input, ps, prefix + ".wk", prefix + ".bk");
  Var V = linear(t, kv_input, ps, prefix + ".wv", prefix + ".bv");

  const bool biased = masks != nullptr && gamma != 0.0 && (masks->any_intra || masks->any_inter);

  Var merged;
  for (int h = 0; h < cfg.heads; ++h) {
    Var qh = t.slice_cols(Q, h * dk, (h + 1) * dk);
    Var kh = t.slice_cols(K, h * dk, (h + 1) * dk);
    Var vh = t.slice_cols(V, h * dk, (h + 1) * dk);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_dk);

    if (biased) {
      struct Cat {
        const nn::Tensor* mask;
        bool any;
        const char* name;
      };
      const Cat cats[2] = {{&masks->intra, masks->any_intra, "intra"},
                           {&masks->inter, masks->any_inter, "inter"}};
      for (int ci = 0; ci < 2; ++ci) {
        const Cat& cat = cats[ci];
        if (!cat.any) continue;
        Var w = t.param(ps, bias_scope + cat.name + ".w");
        Var b = t.param(ps, bias_scope + cat.name + ".b");
        Var raw = t.matmul(t.matmul(qh, w), t.transpose(kh));
        Var biasm = t.add(t.mul_mask(raw, *cat.mask), t.scalar_times_mask(b, *cat.mask));
        Var applied = t.scale(biasm, gamma * inv_sqrt_dk);
        scores = t.add(scores, applied);
        if (stats) {
          const nn::Tensor& vals = t.value(applied);
          const nn::Tensor& m = *cat.mask;
          double sum = 0.0;
          long long cells = 0;
          for (std::size_t i = 0; i < vals.size(); ++i) {
            if (m[i] != 0.0) {
              sum += vals[i];
              ++cells;
            }
          }
          if (ci == 0) {
            stats->intra_sum += sum;
            stats->intra_cells += cells;
          } else {
            stats->inter_sum += sum;
            stats->inter_cells += cells;
          }
        }
      }
    }

    Var probs = t.softmax_rows(scores);
    if (attn_out) attn_out->push_back(probs);
    Var head = t.matmul(probs, vh);
    merged = (h == 0) ? head : t.concat_cols(merged, head);
  }
  return linear(t, merged, ps, prefix + ".wo", prefix + ".bo");
}

EncodeOutput encode(Tape& t, const std::vector<int>& token_ids, const DependencyMatrix* dep,
                    const ModelConfig& cfg, const nn::ParamStore& ps, BiasStats* stats) {
  const int n = static_cast<int>(token_ids.size());
  if (n < 1) throw DataError("encode: empty input");
  if (n > cfg.max_len) throw DataError("encode: input longer than max_len");
  if (dep && dep->size() != n) throw DataError("encode: dependency matrix size mismatch");

  DepMasks masks;
  bool have_masks = false;
  if (dep && cfg.gamma != 0.0) {
    masks = DepMasks::build(*dep);
    have_masks = masks.any_intra || masks.any_inter;
  }
  if (stats) stats->assign(cfg.enc_layers, BiasLayerStats{});

  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  Var x = t.add(t.embed(token_ids, t.param(ps, "embed.tok")),
                t.embed(positions, t.param(ps, "embed.pos")));

  EncodeOutput out;
  for (int i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "enc.L" + std::to_string(i);
    const std::string scope = cfg.per_layer_bias ? p + ".depbias." : "depbias.";
    const bool last = (i == cfg.enc_layers - 1);
    Var normed = layernorm_affine(t, x, ps, p + ".ln1");
    std::vector<Var> attn;
    Var att = multihead_attention(t, normed, normed, cfg, ps, p + ".attn",
                                  have_masks ? &masks : nullptr, cfg.gamma, scope,
                                  last ? &attn : nullptr, stats ? &(*stats)[i] : nullptr);
    if (last) out.attention = std::move(attn);
    x = t.add(x, att);
    Var normed2 = layernorm_affine(t, x, ps, p + ".ln2");
    Var hidden = t.tanh_op(linear(t, normed2, ps, p + ".ffn.w1", p + ".ffn.b1"));
    Var ffn = linear(t, hidden, ps, p + ".ffn.w2", p + ".ffn.b2");
    x = t.add(x, ffn);
  }
  out.hidden = layernorm_affine(t, x, ps, "enc.final_ln");
  return out;
}

}  // namespace argex
