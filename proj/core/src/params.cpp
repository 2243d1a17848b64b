#include "argex/params.hpp"

#include <cmath>
#include <stdexcept>

namespace argex::nn {

Tensor& ParamStore::add(const std::string& name, Tensor init, double lr_mult) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (lr_mult <= 0.0) throw std::invalid_argument("lr multiplier must be positive: " + name);
  Entry e;
  e.grad = Tensor(init.shape());
  e.value = std::move(init);
  e.lr_mult = lr_mult;
  return entries_.emplace(name, std::move(e)).first->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
Tensor& ParamStore::grad(const std::string& name) { return entry(name).grad; }
double ParamStore::lr_mult(const std::string& name) const { return entry(name).lr_mult; }

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, e] : entries_)
    for (std::size_t i = 0; i < e.grad.size(); ++i) sq += e.grad[i] * e.grad[i];
  return std::sqrt(sq);
}

void ParamStore::scale_grads(double s) {
  for (auto& [name, e] : entries_)
    for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] *= s;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = entries_.begin();
  auto jt = other.entries_.begin();
  for (; it != entries_.end(); ++it, ++jt) {
    if (it->first != jt->first) return false;
    if (it->second.lr_mult != jt->second.lr_mult) return false;
    const Tensor& a = it->second.value;
    const Tensor& b = jt->second.value;
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return false;
  }
  return true;
}

Tensor gaussian(int rows, int cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace argex::nn
