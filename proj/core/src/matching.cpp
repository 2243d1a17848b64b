#include "argex/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "argex/error.hpp"

namespace argex {

namespace {

// Kuhn-Munkres with potentials, 1-indexed, rows <= cols.
std::vector<std::pair<int, int>> solve_rect(const nn::Tensor& a, int n, int m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::pair<int, int>> out;
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) out.emplace_back(p[j] - 1, j - 1);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian(const nn::Tensor& cost) {
  const int n = cost.rows(), m = cost.cols();
  if (n == 0 || m == 0) return {};
  for (std::size_t i = 0; i < cost.size(); ++i)
    if (!std::isfinite(cost[i])) throw NumericError("hungarian: non-finite cost entry");
  if (n <= m) return solve_rect(cost, n, m);
  nn::Tensor tr({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) tr.at(j, i) = cost.at(i, j);
  auto pairs = solve_rect(tr, m, n);
  for (auto& pr : pairs) std::swap(pr.first, pr.second);
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

AssignmentResult optimal_assignment(const std::vector<const nn::Tensor*>& start_probs,
                                    const std::vector<const nn::Tensor*>& end_probs,
                                    const std::vector<std::pair<int, int>>& gold_spans) {
  const int n_slots = static_cast<int>(start_probs.size());
  const int n_gold = static_cast<int>(gold_spans.size());
  AssignmentResult out;
  out.targets.resize(n_slots);
  for (int s = 0; s < n_slots; ++s) out.targets[s] = {s, 0, 0};
  out.dropped_gold = std::max(0, n_gold - n_slots);
  if (n_slots == 0 || n_gold == 0) return out;

  nn::Tensor cost({n_slots, n_gold});
  for (int s = 0; s < n_slots; ++s) {
    for (int g = 0; g < n_gold; ++g) {
      const double ps = std::max((*start_probs[s])[gold_spans[g].first], kProbFloor);
      const double pe = std::max((*end_probs[s])[gold_spans[g].second], kProbFloor);
      cost.at(s, g) = -(std::log(ps) + std::log(pe));
    }
  }
  for (const auto& [slot, gold] : hungarian(cost)) {
    out.targets[slot].start = gold_spans[gold].first;
    out.targets[slot].end = gold_spans[gold].second;
  }
  return out;
}

nn::Var bipartite_loss(nn::Tape& t, const std::vector<SpanDistributions>& dists,
                       const std::vector<SlotTarget>& targets) {
  nn::Var total;
  for (const SlotTarget& target : targets) {
    const SpanDistributions& d = dists[target.slot];
    nn::Var term = t.add(t.log_floor(t.pick(d.start, 0, target.start), kProbFloor),
                         t.log_floor(t.pick(d.end, 0, target.end), kProbFloor));
    total = total.valid() ? t.add(total, term) : term;
  }
  if (!total.valid()) return t.input(nn::Tensor::scalar(0.0));
  return t.scale(total, -1.0);
}

}  // namespace argex
