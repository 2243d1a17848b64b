#pragma once

#include <string>
#include <vector>

#include "argex/assembly.hpp"
#include "argex/model.hpp"
#include "argex/tape.hpp"

namespace argex {

struct EncodeOutput {
  nn::Var hidden;                  // l_s x d
  std::vector<nn::Var> attention;  // final layer, one l_s x l_s matrix per head
};

/// Accumulates the applied bias values (gamma * bias_ij) per layer and
/// dependency category, across heads and cells.
struct BiasLayerStats {
  double intra_sum = 0.0;
  long long intra_cells = 0;
  double inter_sum = 0.0;
  long long inter_cells = 0;
};
using BiasStats = std::vector<BiasLayerStats>;

/// 0/1 masks for the two dependency categories, built once per input.
struct DepMasks {
  nn::Tensor intra;
  nn::Tensor inter;
  bool any_intra = false;
  bool any_inter = false;
  static DepMasks build(const DependencyMatrix& dep);
};

nn::Var layernorm_affine(nn::Tape& t, nn::Var x, const nn::ParamStore& ps, const std::string& prefix);
nn::Var linear(nn::Tape& t, nn::Var x, const nn::ParamStore& ps, const std::string& w,
               const std::string& b);

/// Multi-head attention with the optional dependency-guided score bias:
/// a_ij = q_i.k_j/sqrt(dk) + gamma * (q_i W_dp k_j^T + b_dp)/sqrt(dk) on
/// non-NA cells. Pass masks=nullptr (or gamma=0) for vanilla attention.
/// bias_scope names the parameter group, e.g. "depbias." or "enc.L2.depbias.".
nn::Var multihead_attention(nn::Tape& t, nn::Var q_input, nn::Var kv_input,
                            const ModelConfig& cfg, const nn::ParamStore& ps,
                            const std::string& prefix, const DepMasks* masks, double gamma,
                            const std::string& bias_scope, std::vector<nn::Var>* attn_out,
                            BiasLayerStats* stats);

/// Pre-norm transformer encoder; every layer's self-attention applies the
/// dependency bias. Returns final hidden states and final-layer attention.
EncodeOutput encode(nn::Tape& t, const std::vector<int>& token_ids, const DependencyMatrix* dep,
                    const ModelConfig& cfg, const nn::ParamStore& ps, BiasStats* stats = nullptr);

}  // namespace argex
