#pragma once

#include <utility>
#include <vector>

#include "argex/decoder.hpp"
#include "argex/tape.hpp"

namespace argex {

/// Minimum-cost assignment over an n x m cost matrix; returns min(n, m)
/// (row, col) pairs. Throws NumericError on non-finite entries.
std::vector<std::pair<int, int>> hungarian(const nn::Tensor& cost);

/// Supervision target for one slot: a gold span in assembled coordinates,
/// or the null anchor (0,0) when the slot went unmatched.
struct SlotTarget {
  int slot = 0;  // index into the group's slot list
  int start = 0;
  int end = 0;
};

struct AssignmentResult {
  std::vector<SlotTarget> targets;  // one per slot
  int dropped_gold = 0;             // golds beyond the slot count
};

/// Hungarian assignment for one (event, role) group. Cost of (slot, gold) is
/// the negative log-likelihood of the gold span under the slot's start/end
/// distributions; surplus slots target the null anchor.
AssignmentResult optimal_assignment(const std::vector<const nn::Tensor*>& start_probs,
                                    const std::vector<const nn::Tensor*>& end_probs,
                                    const std::vector<std::pair<int, int>>& gold_spans);

constexpr double kProbFloor = 1e-12;

/// Negative log-likelihood over all assigned (slot, target) pairs:
/// -sum(log start[target.start] + log end[target.end]), with the
/// probability floor guarding log(0).
nn::Var bipartite_loss(nn::Tape& t, const std::vector<SpanDistributions>& dists,
                       const std::vector<SlotTarget>& targets);

}  // namespace argex
