#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "argex/params.hpp"
#include "argex/tensor.hpp"

namespace argex::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over a single computation graph. Forward values are
/// computed eagerly as ops are recorded; backward() replays the tape in
/// reverse. A tape is confined to one thread; distinct tapes are independent.
class Tape {
 public:
  /// with_grad=false records values only (inference mode); backward becomes
  /// a no-op and parameter nodes carry no gradient buffers.
  explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor value);
  Var param(const ParamStore& store, const std::string& name);

  // matmul(a, b): (n x k) * (k x m) -> (n x m)
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                       // elementwise, same shape
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var v);                // v broadcast over rows of a
  Var mul_rowvec(Var a, Var v);
  Var mul_mask(Var a, const Tensor& mask);     // elementwise by a constant
  Var scalar_times_mask(Var s, const Tensor& mask);  // 1x1 var spread over a constant
  Var tanh_op(Var a);
  Var log_floor(Var a, double floor);          // log(max(x, floor)); zero grad below floor
  Var softmax_rows(Var a);
  // Per-row softmax restricted to allowed columns; disallowed outputs are exactly 0.
  Var masked_softmax_rows(Var a, std::vector<std::uint8_t> col_allowed);
  Var layernorm(Var a);                        // per row, mean 0 / variance 1
  Var embed(const std::vector<int>& ids, Var table);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int lo, int hi);
  Var mean_rows(Var a, std::vector<int> rows); // mean of selected rows -> 1 x cols
  Var pick(Var a, int r, int c);               // single element -> 1 x 1

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const { return nodes_[v.id].value[0]; }

  /// Seeds d(loss)=1 and runs the tape in reverse. Throws NumericError if the
  /// loss value is not finite.
  void backward(Var loss);

  /// Adds scale * (per-graph parameter gradients) into the store.
  void accumulate_param_grads(ParamStore& store, double scale = 1.0) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
    std::string param_name;  // non-empty for param leaves
  };

  Var make(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
  Tensor& grad_ref(Var v) { return nodes_[v.id].grad; }
  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  bool ng(Var v) const { return nodes_[v.id].needs_grad; }

  bool with_grad_ = true;
  std::vector<Node> nodes_;
};

/// Loss callback for gradient checking: computes the scalar loss, and when
/// with_grad is set also accumulates analytic gradients into the store.
using LossFn = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_coord = 0;
  int coords_checked = 0;
};

/// Central finite differences against analytic gradients over sampled
/// coordinates: max |analytic - central| / max(1, |central|).
GradCheckReport grad_check(const LossFn& loss, ParamStore& params, double eps,
                           int samples_per_tensor, std::uint64_t seed);

}  // namespace argex::nn
