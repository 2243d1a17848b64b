#include "argex/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "argex/error.hpp"
#include "argex/rng.hpp"

namespace argex::nn {

namespace {
void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// C += A * B, row-major, ikj order.
void mm_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A^T * B with A (n x k), B (n x m), C (k x m).
void mm_at_b_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T with A (n x k), B (m x k), C (n x m).
void mm_a_bt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double dot = 0.0;
      for (int p = 0; p < k; ++p) dot += arow[p] * brow[p];
      crow[j] += dot;
    }
  }
}

constexpr double kLayerNormEps = 1e-9;
}  // namespace

Var Tape::make(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
  Node node;
  if (needs_grad) node.grad = Tensor(value.shape());
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) { return make(std::move(value), false, nullptr); }

Var Tape::param(const ParamStore& store, const std::string& name) {
  Var v = make(store.value(name), with_grad_, nullptr);
  nodes_[v.id].param_name = name;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.cols() == B.rows(), "matmul shape mismatch " + A.shape_str() + " * " + B.shape_str());
  const int n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out({n, m});
  mm_acc(A.data(), B.data(), out.data(), n, k, m);
  Var o = make(std::move(out), ng(a) || ng(b), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, b, n, k, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) mm_a_bt_acc(go.data(), t.val(b).data(), t.grad_ref(a).data(), n, m, k);
      if (t.ng(b)) mm_at_b_acc(t.val(a).data(), go.data(), t.grad_ref(b).data(), n, k, m);
    };
  }
  return o;
}

Var Tape::transpose(Var a) {
  const Tensor& A = val(a);
  const int n = A.rows(), m = A.cols();
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = A.at(i, j);
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, n, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& ga = t.grad_ref(a);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) ga.at(i, j) += go.at(j, i);
    };
  }
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "add shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  Var o = make(std::move(out), ng(a) || ng(b), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, b](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (t.ng(b)) {
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "sub shape mismatch");
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  Var o = make(std::move(out), ng(a) || ng(b), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, b](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (t.ng(b)) {
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "mul shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  Var o = make(std::move(out), ng(a) || ng(b), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, b](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        const Tensor& B2 = t.val(b);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * B2[i];
      }
      if (t.ng(b)) {
        Tensor& gb = t.grad_ref(b);
        const Tensor& A2 = t.val(a);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * A2[i];
      }
    };
  }
  return o;
}

Var Tape::scale(Var a, double c) {
  const Tensor& A = val(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * c;
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, c](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
    };
  }
  return o;
}

Var Tape::add_rowvec(Var a, Var v) {
  const Tensor& A = val(a);
  const Tensor& V = val(v);
  require(V.rows() == 1 && V.cols() == A.cols(), "add_rowvec shape mismatch");
  Tensor out(A.shape());
  const int n = A.rows(), m = A.cols();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = A.at(i, j) + V[j];
  Var o = make(std::move(out), ng(a) || ng(v), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, v, n, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (t.ng(v)) {
        Tensor& gv = t.grad_ref(v);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) gv[j] += go.at(i, j);
      }
    };
  }
  return o;
}

Var Tape::mul_rowvec(Var a, Var v) {
  const Tensor& A = val(a);
  const Tensor& V = val(v);
  require(V.rows() == 1 && V.cols() == A.cols(), "mul_rowvec shape mismatch");
  Tensor out(A.shape());
  const int n = A.rows(), m = A.cols();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = A.at(i, j) * V[j];
  Var o = make(std::move(out), ng(a) || ng(v), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, v, n, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        const Tensor& V2 = t.val(v);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) ga.at(i, j) += go.at(i, j) * V2[j];
      }
      if (t.ng(v)) {
        Tensor& gv = t.grad_ref(v);
        const Tensor& A2 = t.val(a);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) gv[j] += go.at(i, j) * A2.at(i, j);
      }
    };
  }
  return o;
}

Var Tape::mul_mask(Var a, const Tensor& mask) {
  const Tensor& A = val(a);
  require(A.same_shape(mask), "mul_mask shape mismatch");
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * mask[i];
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, mask](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
    };
  }
  return o;
}

Var Tape::scalar_times_mask(Var s, const Tensor& mask) {
  const Tensor& S = val(s);
  require(S.size() == 1, "scalar_times_mask expects a 1x1 var");
  Tensor out(mask.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = S[0] * mask[i];
  Var o = make(std::move(out), ng(s), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, s, mask](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      double acc = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * mask[i];
      t.grad_ref(s)[0] += acc;
    };
  }
  return o;
}

Var Tape::tanh_op(Var a) {
  const Tensor& A = val(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      const Tensor& y = t.val(o);
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
    };
  }
  return o;
}

Var Tape::log_floor(Var a, double floor) {
  require(floor > 0.0, "log_floor needs a positive floor");
  const Tensor& A = val(a);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(A[i], floor));
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, floor](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      const Tensor& x = t.val(a);
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (x[i] > floor) ga[i] += go[i] / x[i];
    };
  }
  return o;
}

Var Tape::softmax_rows(Var a) {
  std::vector<std::uint8_t> all(val(a).cols(), 1);
  return masked_softmax_rows(a, std::move(all));
}

Var Tape::masked_softmax_rows(Var a, std::vector<std::uint8_t> col_allowed) {
  const Tensor& A = val(a);
  const int n = A.rows(), m = A.cols();
  require(static_cast<int>(col_allowed.size()) == m, "softmax mask length mismatch");
  bool any = false;
  for (auto f : col_allowed) any = any || (f != 0);
  require(any, "softmax mask excludes every column");
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
      if (col_allowed[j] && A.at(i, j) > mx) mx = A.at(i, j);
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      if (!col_allowed[j]) continue;
      const double e = std::exp(A.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < m; ++j)
      if (col_allowed[j]) out.at(i, j) /= z;
  }
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, n, m, mask = std::move(col_allowed)](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      const Tensor& p = t.val(o);
      Tensor& ga = t.grad_ref(a);
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < m; ++j)
          if (mask[j]) dot += p.at(i, j) * go.at(i, j);
        for (int j = 0; j < m; ++j)
          if (mask[j]) ga.at(i, j) += p.at(i, j) * (go.at(i, j) - dot);
      }
    };
  }
  return o;
}

Var Tape::layernorm(Var a) {
  const Tensor& A = val(a);
  const int n = A.rows(), m = A.cols();
  require(m > 0, "layernorm on empty rows");
  Tensor out({n, m});
  std::vector<double> inv_std(n);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += A.at(i, j);
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = A.at(i, j) - mean;
      var += d * d;
    }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = inv;
    for (int j = 0; j < m; ++j) out.at(i, j) = (A.at(i, j) - mean) * inv;
  }
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, n, m, inv = std::move(inv_std)](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      const Tensor& y = t.val(o);
      Tensor& ga = t.grad_ref(a);
      for (int i = 0; i < n; ++i) {
        double gmean = 0.0, gymean = 0.0;
        for (int j = 0; j < m; ++j) {
          gmean += go.at(i, j);
          gymean += go.at(i, j) * y.at(i, j);
        }
        gmean /= m;
        gymean /= m;
        for (int j = 0; j < m; ++j)
          ga.at(i, j) += inv[i] * (go.at(i, j) - gmean - y.at(i, j) * gymean);
      }
    };
  }
  return o;
}

Var Tape::embed(const std::vector<int>& ids, Var table) {
  const Tensor& T = val(table);
  const int m = T.cols();
  for (int id : ids)
    require(id >= 0 && id < T.rows(), "embed id out of range");
  Tensor out({static_cast<int>(ids.size()), m});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < m; ++j) out.at(static_cast<int>(i), j) = T.at(ids[i], j);
  Var o = make(std::move(out), ng(table), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, table, ids, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& gt = t.grad_ref(table);
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < m; ++j) gt.at(ids[i], j) += go.at(static_cast<int>(i), j);
    };
  }
  return o;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.rows() == B.rows(), "concat_cols row mismatch");
  const int n = A.rows(), ma = A.cols(), mb = B.cols();
  Tensor out({n, ma + mb});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ma; ++j) out.at(i, j) = A.at(i, j);
    for (int j = 0; j < mb; ++j) out.at(i, ma + j) = B.at(i, j);
  }
  Var o = make(std::move(out), ng(a) || ng(b), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, b, n, ma, mb](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      if (t.ng(a)) {
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < ma; ++j) ga.at(i, j) += go.at(i, j);
      }
      if (t.ng(b)) {
        Tensor& gb = t.grad_ref(b);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < mb; ++j) gb.at(i, j) += go.at(i, ma + j);
      }
    };
  }
  return o;
}

Var Tape::slice_cols(Var a, int lo, int hi) {
  const Tensor& A = val(a);
  require(0 <= lo && lo < hi && hi <= A.cols(), "slice_cols range out of bounds");
  const int n = A.rows(), m = hi - lo;
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = A.at(i, lo + j);
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, lo, n, m](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& ga = t.grad_ref(a);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) ga.at(i, lo + j) += go.at(i, j);
    };
  }
  return o;
}

Var Tape::mean_rows(Var a, std::vector<int> rows) {
  const Tensor& A = val(a);
  require(!rows.empty(), "mean_rows needs at least one row");
  for (int r : rows) require(0 <= r && r < A.rows(), "mean_rows index out of range");
  const int m = A.cols();
  Tensor out({1, m});
  for (int r : rows)
    for (int j = 0; j < m; ++j) out[j] += A.at(r, j);
  const double w = 1.0 / static_cast<double>(rows.size());
  for (int j = 0; j < m; ++j) out[j] *= w;
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, m, w, rows = std::move(rows)](Tape& t) {
      const Tensor& go = t.nodes_[o.id].grad;
      Tensor& ga = t.grad_ref(a);
      for (int r : rows)
        for (int j = 0; j < m; ++j) ga.at(r, j) += go[j] * w;
    };
  }
  return o;
}

Var Tape::pick(Var a, int r, int c) {
  const Tensor& A = val(a);
  require(0 <= r && r < A.rows() && 0 <= c && c < A.cols(), "pick index out of range");
  Tensor out({1, 1}, {A.at(r, c)});
  Var o = make(std::move(out), ng(a), nullptr);
  if (nodes_[o.id].needs_grad) {
    nodes_[o.id].back = [o, a, r, c](Tape& t) {
      t.grad_ref(a).at(r, c) += t.nodes_[o.id].grad[0];
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  require(loss.valid() && val(loss).size() == 1, "backward requires a scalar loss");
  if (!std::isfinite(val(loss)[0])) throw NumericError("non-finite loss value");
  if (!nodes_[loss.id].needs_grad) return;
  grad_ref(loss)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.needs_grad && node.back) node.back(*this);
  }
}

void Tape::accumulate_param_grads(ParamStore& store, double scale) const {
  for (const Node& node : nodes_) {
    if (node.param_name.empty() || !node.needs_grad) continue;
    Tensor& g = store.grad(node.param_name);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * node.grad[i];
  }
}

GradCheckReport grad_check(const LossFn& loss, ParamStore& params, double eps,
                           int samples_per_tensor, std::uint64_t seed) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("grad_check eps must be in (0, 1e-3]");
  params.zero_grads();
  const double base = loss(params, true);
  if (!std::isfinite(base)) throw NumericError("non-finite loss in grad_check");

  Rng rng(seed);
  GradCheckReport report;
  for (const std::string& name : params.names()) {
    Tensor& v = params.value(name);
    const Tensor& g = params.grad(name);
    const int n = static_cast<int>(v.size());
    std::vector<int> coords;
    if (n <= samples_per_tensor) {
      for (int i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int s = 0; s < samples_per_tensor; ++s) coords.push_back(rng.uniform_int(0, n - 1));
    }
    for (int c : coords) {
      const double orig = v[c];
      v[c] = orig + eps;
      const double up = loss(params, false);
      v[c] = orig - eps;
      const double down = loss(params, false);
      v[c] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("non-finite loss while perturbing " + name);
      const double central = (up - down) / (2.0 * eps);
      const double rel = std::abs(g[c] - central) / std::max(1.0, std::abs(central));
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_coord = static_cast<std::size_t>(c);
      }
    }
  }
  return report;
}

}  // namespace argex::nn
