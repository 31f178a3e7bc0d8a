#pragma once

#include <string>
#include <utility>

#include "ben/diffmath.hpp"
#include "ben/netblocks/gru.hpp"
#include "ben/netblocks/mlp.hpp"

namespace ben::net {

/// o_t = (r_{t-1}, s_t, a_{t-1}); prev_action < 0 means no previous action.
struct Observation {
  double prev_reward = 0.0;
  Tensor state;
  int prev_action = -1;
};

enum class HistoryMode { recurrent, contextual };

struct QNetConfig {
  HistoryMode mode = HistoryMode::recurrent;
  std::size_t state_dim = 1;
  std::size_t n_actions = 1;
  std::size_t pre_hidden = 32;
  std::size_t gru_hidden = 2;
  std::size_t post_hidden = 32;
  double reward_scale = 1.0;  // applied to prev_reward in the input
  double state_scale = 1.0;
  double value_scale = 1.0;   // q = value_scale * network output

  std::size_t input_dim() const {
    return mode == HistoryMode::contextual ? state_dim : 1 + state_dim + n_actions;
  }
};

struct QOut {
  Var h;
  Var q;
};

/// input -> [Linear+ReLU] -> GRU -> [Linear+ReLU] -> Linear(actions).
/// Contextual mode replaces the GRU by nothing and reads the state only.
class QNet {
 public:
  QNet() = default;
  explicit QNet(QNetConfig cfg, std::string prefix = "q/") : cfg_(cfg), prefix_(std::move(prefix)) {
    if (cfg_.n_actions == 0 || cfg_.state_dim == 0) throw diff::ShapeError("qnet: zero width");
    pre_ = Mlp(MlpSpec{cfg_.input_dim(), {cfg_.pre_hidden}, {Activation::relu}}, prefix_ + "pre/");
    const std::size_t core = cfg_.mode == HistoryMode::recurrent ? cfg_.gru_hidden : cfg_.pre_hidden;
    if (cfg_.mode == HistoryMode::recurrent) gru_ = GruCell(cfg_.pre_hidden, cfg_.gru_hidden, prefix_ + "gru/");
    post_ = Mlp(MlpSpec{core, {cfg_.post_hidden, cfg_.n_actions}, {Activation::relu, Activation::none}},
                prefix_ + "post/");
  }

  const QNetConfig& config() const { return cfg_; }
  std::size_t hidden() const { return cfg_.mode == HistoryMode::recurrent ? cfg_.gru_hidden : 1; }
  std::size_t n_actions() const { return cfg_.n_actions; }

  void init(ParamStore& store, Rng& rng) const {
    pre_.init(store, rng);
    if (cfg_.mode == HistoryMode::recurrent) gru_.init(store, rng);
    post_.init(store, rng);
  }

  Tensor initial_state() const { return Tensor::zeros({hidden()}); }

  Tensor encode(const Observation& o) const {
    if (o.state.size() != cfg_.state_dim)
      throw diff::ShapeError("qnet: state width " + std::to_string(o.state.size()) + ", expected " +
                             std::to_string(cfg_.state_dim));
    if (o.prev_action >= static_cast<int>(cfg_.n_actions)) throw diff::ShapeError("qnet: action index out of range");
    Tensor x = Tensor::zeros({cfg_.input_dim()});
    std::size_t k = 0;
    if (cfg_.mode == HistoryMode::recurrent) x[k++] = o.prev_reward * cfg_.reward_scale;
    for (std::size_t i = 0; i < cfg_.state_dim; ++i) x[k++] = o.state[i] * cfg_.state_scale;
    if (cfg_.mode == HistoryMode::recurrent && o.prev_action >= 0) x[k + static_cast<std::size_t>(o.prev_action)] = 1.0;
    return x;
  }

  QOut step(Tape& tape, ParamStore& store, const Var& h, const Observation& o) const {
    return step_encoded(tape, store, h, tape.constant(encode(o)));
  }

  /// Same as step() from an already-encoded input (lets callers differentiate w.r.t. it).
  QOut step_encoded(Tape& tape, ParamStore& store, const Var& h, const Var& x) const {
    Var e = pre_.forward(tape, store, x);
    Var h_next = h;
    Var core = e;
    if (cfg_.mode == HistoryMode::recurrent) {
      h_next = gru_.step(tape, store, h, e);
      core = h_next;
    }
    Var q = post_.forward(tape, store, core);
    if (cfg_.value_scale != 1.0) q = diff::scale(q, cfg_.value_scale);
    return {h_next, q};
  }

 private:
  QNetConfig cfg_;
  std::string prefix_;
  Mlp pre_;
  GruCell gru_;
  Mlp post_;
};

/// Tensor-level step: (new encoding, q-values).
inline std::pair<Tensor, Tensor> qnet_step(const QNet& net, ParamStore& store, const Tensor& h,
                                           const Observation& o) {
  Tape tape(false);
  QOut out = net.step(tape, store, tape.constant(h), o);
  return {out.h.value(), out.q.value()};
}

}  // namespace ben::net
