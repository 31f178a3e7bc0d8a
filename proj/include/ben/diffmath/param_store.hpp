#pragma once

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ben/diffmath/tensor.hpp"

namespace ben::diff {

using Rng = std::mt19937_64;

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = standard_normal(rng);
  return t;
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Named parameters with parallel gradients and adaptive-moment state.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  void add(const std::string& name, Tensor init) {
    if (entries_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Entry e;
    e.grad = Tensor(init.shape(), 0.0);
    e.m = Tensor(init.shape(), 0.0);
    e.v = Tensor(init.shape(), 0.0);
    e.value = std::move(init);
    entries_.emplace(name, std::move(e));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.grad.fill(0.0);
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [_, e] : entries_)
      for (double g : e.grad.values()) s += g * g;
    return std::sqrt(s);
  }

  std::size_t step_count() const { return steps_; }
  void increment_step() { ++steps_; }

  /// Values only; optimizer state is reset.
  void load_values_from(const ParamStore& other) {
    for (auto& [k, e] : entries_) e.value = other.value(k);
  }

 private:
  std::map<std::string, Entry> entries_;
  std::size_t steps_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // global-norm clipping; <= 0 disables
};

/// One adaptive-moment update from the accumulated gradients, then zeroes them.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& [name, e] : store.entries())
    if (!e.grad.all_finite()) throw DomainError("non-finite gradient for parameter '" + name + "'");

  double scale = 1.0;
  if (cfg.clip_norm > 0.0) {
    const double norm = store.grad_norm();
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }

  store.increment_step();
  const double t = static_cast<double>(store.step_count());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [_, e] : store.entries()) {
    auto& p = e.value.values();
    auto& g = e.grad.values();
    auto& m = e.m.values();
    auto& v = e.v.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
      g[i] = 0.0;
    }
  }
}

}  // namespace ben::diff
