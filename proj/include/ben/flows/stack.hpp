#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ben/flows/layers.hpp"
#include "ben/flows/param_source.hpp"

namespace ben::flows {

/// f_L o ... o f_1 applied to a standard Gaussian base of width base_dim.
class FlowStack {
 public:
  explicit FlowStack(std::size_t base_dim = 1) : base_dim_(base_dim) {}

  template <class L, class... Args>
  FlowStack& emplace(Args&&... args) {
    return add(std::make_shared<L>(std::forward<Args>(args)...));
  }

  FlowStack& add(std::shared_ptr<const FlowLayer> layer) {
    if (layer->in_dim() != out_dim())
      throw diff::ShapeError("flow stack: layer " + layer->kind() + " takes width " + std::to_string(layer->in_dim()) +
                             " after width " + std::to_string(out_dim()));
    layers_.push_back(std::move(layer));
    return *this;
  }

  std::size_t base_dim() const { return base_dim_; }
  std::size_t out_dim() const { return layers_.empty() ? base_dim_ : layers_.back()->out_dim(); }
  std::size_t size() const { return layers_.size(); }
  const FlowLayer& layer(std::size_t i) const { return *layers_.at(i); }
  bool bijective() const {
    for (const auto& l : layers_)
      if (!l->bijective()) return false;
    return true;
  }

  void init(ParamStore& store, const std::string& prefix, Rng& rng) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->init(store, StoreProvider::layer_prefix(prefix, i), rng);
  }

  Transformed forward(Tape& tape, const Var& z, ParamProvider& params) const {
    if (z.size() != base_dim_) throw diff::ShapeError("flow forward: base width mismatch");
    Var x = z;
    Var logdet = tape.constant(0.0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Transformed t = layers_[i]->forward(tape, x, params.layer(i));
      x = t.value;
      logdet = logdet + t.logdet;
    }
    return {x, logdet};
  }

  /// Base point and summed inverse terms; log p(x) = log N(z) + term.
  Transformed inverse(Tape& tape, const Var& x, ParamProvider& params, Rng& rng) const {
    if (x.size() != out_dim()) throw diff::ShapeError("flow inverse: data width mismatch");
    Var z = x;
    Var term = tape.constant(0.0);
    for (std::size_t k = layers_.size(); k-- > 0;) {
      Transformed t = layers_[k]->inverse(tape, z, params.layer(k), rng);
      z = t.value;
      term = term + t.logdet;
    }
    return {z, term};
  }

  /// Exact for bijective stacks; a single-draw lower-bound estimate otherwise.
  Var log_prob(Tape& tape, const Var& x, ParamProvider& params, Rng& rng) const {
    Transformed inv = inverse(tape, x, params, rng);
    return std_normal_logpdf(inv.value) + inv.logdet;
  }

 private:
  std::size_t base_dim_;
  std::vector<std::shared_ptr<const FlowLayer>> layers_;
};

struct FlowSample {
  Tensor x;
  double logdet = 0.0;
};

/// Tensor-level wrappers over a non-recording tape.
inline FlowSample flow_forward(const FlowStack& stack, const Tensor& z, ParamProvider& params) {
  Tape tape(false);
  Transformed t = stack.forward(tape, tape.constant(z), params);
  return {t.value.value(), t.logdet.item()};
}

inline FlowSample flow_inverse(const FlowStack& stack, const Tensor& x, ParamProvider& params, Rng& rng) {
  Tape tape(false);
  Transformed t = stack.inverse(tape, tape.constant(x), params, rng);
  return {t.value.value(), t.logdet.item()};
}

inline double log_prob(const FlowStack& stack, const Tensor& x, ParamProvider& params, Rng& rng) {
  Tape tape(false);
  return stack.log_prob(tape, tape.constant(x), params, rng).item();
}

}  // namespace ben::flows
