#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "argex/encoder.hpp"

namespace argex {

/// Transformer decoder over the encoder states: full self-attention (with
/// the dependency bias when bias_in_decoder is set), cross-attention into
/// the encoder output, and a feed-forward block, all pre-norm.
nn::Var decode(nn::Tape& t, nn::Var h_en, const DependencyMatrix* dep, const ModelConfig& cfg,
               const nn::ParamStore& ps);

/// Event-specific attention weights for one (event, slot) pair:
/// p = softmax(A_t (elementwise*) A_s), where A_t is the head-mean attention
/// row at the trigger's opening marker and A_s the head-and-token mean over
/// the slot's rows.
nn::Var eia_weights(nn::Tape& t, const std::vector<nn::Var>& attention, int trigger_pos,
                    int slot_lo, int slot_hi);

/// c = H_en^T p; h_slot = mean of decoder rows over the slot; returns
/// tanh(W1 [h_slot ; c]). With disable_context the aggregated vector c is
/// replaced by zeros (the EIA ablation).
nn::Var eia_enhance(nn::Tape& t, nn::Var h_en, nn::Var p, nn::Var h_de, int slot_lo, int slot_hi,
                    const nn::ParamStore& ps, bool disable_context = false);

/// Span selectors of Eq-style elementwise form: (h ∘ w_start, h ∘ w_end).
std::pair<nn::Var, nn::Var> span_selectors(nn::Tape& t, nn::Var h_tilde, const nn::ParamStore& ps);

struct SpanDistributions {
  nn::Var start;  // 1 x l_s probabilities
  nn::Var end;
};

/// Masked softmax over H_de * phi for start and end; positions outside the
/// allowed set get probability exactly zero.
SpanDistributions span_distributions(nn::Tape& t, nn::Var h_de, nn::Var phi_start,
                                     nn::Var phi_end, const std::vector<std::uint8_t>& mask);

struct SpanChoice {
  int lo = 0;
  int hi = 0;
  double score = 0.0;
  bool empty() const { return lo == 0 && hi == 0; }
};

/// Argmax of start[m] + end[n] over the candidate set
/// C = {(m,n) : context_lo <= m < n <= context_hi, n - m <= max_span_len}
/// plus the empty span (0,0). Ties resolve to the smallest m, then n.
SpanChoice select_span(const nn::Tensor& start_probs, const nn::Tensor& end_probs,
                       int context_lo, int context_hi, int max_span_len);

}  // namespace argex
