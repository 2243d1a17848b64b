#pragma once

#include <map>
#include <string>
#include <vector>

#include "argex/rng.hpp"
#include "argex/tensor.hpp"

namespace argex::nn {

/// Named trainable tensors with per-name learning-rate multipliers and
/// gradient accumulators. Iteration order is the (sorted) name order, which
/// keeps optimizer updates and serialization deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    double lr_mult = 1.0;
  };

  Tensor& add(const std::string& name, Tensor init, double lr_mult = 1.0);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  double lr_mult(const std::string& name) const;

  void zero_grads();
  double grad_norm() const;
  void scale_grads(double s);

  std::vector<std::string> names() const;
  std::size_t total_values() const;

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  bool operator==(const ParamStore& other) const;

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

/// Gaussian init helper used by the model builders.
Tensor gaussian(int rows, int cols, double stddev, Rng& rng);

}  // namespace argex::nn
