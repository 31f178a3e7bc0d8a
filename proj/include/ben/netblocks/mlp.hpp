#pragma once

#include <string>
#include <vector>

#include "ben/diffmath.hpp"

namespace ben::net {

using diff::ParamStore;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;

enum class Activation { relu, tanh, none };

inline Var activate(Activation a, const Var& x) {
  switch (a) {
    case Activation::relu: return diff::relu(x);
    case Activation::tanh: return diff::tanh(x);
    case Activation::none: break;
  }
  return x;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::none: break;
  }
  return x;
}

struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;  // one per layer

  void validate() const {
    if (widths.empty()) throw diff::ShapeError("mlp needs at least one layer");
    if (activations.size() != widths.size()) throw diff::ShapeError("mlp: one activation per layer");
    if (input == 0) throw diff::ShapeError("mlp: zero input width");
    for (auto w : widths)
      if (w == 0) throw diff::ShapeError("mlp: zero layer width");
  }
  std::size_t output() const { return widths.back(); }
};

/// Affine stack; layer k stores "<prefix>W<k>" (out x in) and "<prefix>b<k>".
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) { spec_.validate(); }

  const MlpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  std::string weight_name(std::size_t k) const { return prefix_ + "W" + std::to_string(k); }
  std::string bias_name(std::size_t k) const { return prefix_ + "b" + std::to_string(k); }

  // last_layer_gain shrinks the output layer (used where a near-zero start is wanted)
  void init(ParamStore& store, Rng& rng, double last_layer_gain = 1.0) const {
    std::size_t in = spec_.input;
    for (std::size_t k = 0; k < spec_.widths.size(); ++k) {
      const std::size_t out = spec_.widths[k];
      Tensor w = diff::fan_in_uniform({out, in}, in, rng);
      Tensor b = diff::fan_in_uniform({out}, in, rng);
      if (k + 1 == spec_.widths.size() && last_layer_gain != 1.0) {
        for (auto& v : w.values()) v *= last_layer_gain;
        for (auto& v : b.values()) v *= last_layer_gain;
      }
      store.add(weight_name(k), std::move(w));
      store.add(bias_name(k), std::move(b));
      in = out;
    }
  }

  Var forward(Tape& tape, ParamStore& store, const Var& x, bool frozen = false) const {
    if (x.size() != spec_.input)
      throw diff::ShapeError("mlp " + prefix_ + ": input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(spec_.input));
    Var h = x;
    for (std::size_t k = 0; k < spec_.widths.size(); ++k) {
      Var w = frozen ? tape.constant(store.value(weight_name(k))) : tape.param(store, weight_name(k));
      Var b = frozen ? tape.constant(store.value(bias_name(k))) : tape.param(store, bias_name(k));
      h = activate(spec_.activations[k], diff::affine(w, h, b));
    }
    return h;
  }

 private:
  MlpSpec spec_;
  std::string prefix_;
};

/// Plain-value evaluation of an MLP (no tape).
inline Tensor mlp_forward(const Mlp& mlp, const ParamStore& store, const Tensor& x) {
  const MlpSpec& spec = mlp.spec();
  if (x.size() != spec.input) throw diff::ShapeError("mlp_forward: input width mismatch");
  std::vector<double> h = x.values();
  for (std::size_t k = 0; k < spec.widths.size(); ++k) {
    const Tensor& w = store.value(mlp.weight_name(k));
    const Tensor& b = store.value(mlp.bias_name(k));
    std::vector<double> next(spec.widths[k]);
    for (std::size_t i = 0; i < next.size(); ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < h.size(); ++j) s += w.at(i, j) * h[j];
      next[i] = activate(spec.activations[k], s);
    }
    h = std::move(next);
  }
  return Tensor::vector(std::move(h));
}

}  // namespace ben::net
