#pragma once

#include <string>

#include "ben/diffmath.hpp"

namespace ben::net {

using diff::ParamStore;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
/// n = tanh(Wn x + Un (r*h) + bn), h' = (1-z)*n + z*h
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::size_t input, std::size_t hidden, std::string prefix)
      : input_(input), hidden_(hidden), prefix_(std::move(prefix)) {
    if (input == 0 || hidden == 0) throw diff::ShapeError("gru: zero width");
  }

  std::size_t input() const { return input_; }
  std::size_t hidden() const { return hidden_; }
  std::string name(const char* p) const { return prefix_ + p; }

  void init(ParamStore& store, Rng& rng) const {
    for (const char* g : {"z", "r", "n"}) {
      store.add(prefix_ + "W" + g, diff::fan_in_uniform({hidden_, input_}, hidden_, rng));
      store.add(prefix_ + "U" + g, diff::fan_in_uniform({hidden_, hidden_}, hidden_, rng));
      store.add(prefix_ + "b" + g, diff::fan_in_uniform({hidden_}, hidden_, rng));
    }
  }

  Var step(Tape& tape, ParamStore& store, const Var& h, const Var& x) const {
    if (x.size() != input_ || h.size() != hidden_) throw diff::ShapeError("gru_step: dimension mismatch");
    auto gate = [&](const char* g) {
      Var w = tape.param(store, prefix_ + "W" + g);
      Var b = tape.param(store, prefix_ + "b" + g);
      return diff::affine(w, x, b);
    };
    auto rec = [&](const char* g, const Var& v) { return diff::matmul(tape.param(store, prefix_ + "U" + g), v); };
    Var z = diff::sigmoid(gate("z") + rec("z", h));
    Var r = diff::sigmoid(gate("r") + rec("r", h));
    Var n = diff::tanh(gate("n") + rec("n", r * h));
    Var one = tape.constant(1.0);
    return (one - z) * n + z * h;
  }

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::string prefix_;
};

/// Tensor-level step on a non-recording tape.
inline Tensor gru_step(const GruCell& cell, ParamStore& store, const Tensor& h, const Tensor& x) {
  Tape tape(false);
  return cell.step(tape, store, tape.constant(h), tape.constant(x)).value();
}

}  // namespace ben::net
