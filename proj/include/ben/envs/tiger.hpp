#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "ben/envs/cmdp.hpp"

namespace ben::envs {

struct TigerParams {
  double r_tiger = -500.0;
  double r_gold = 10.0;
  double r_listen = -1.0;
  double gamma = 0.9;
  double p_correct = 0.85;  // listen lands on the tiger side's state
  double p_wrong = 0.10;    // remaining 0.05 stays in s0
};

/// phi = 0: tiger behind door 1 (left); phi = 1: behind door 2.
/// States s0, s1, s2 (one-hot); actions open1, open2, listen.
class TigerEnv : public CmdpEnv {
 public:
  enum Action { open1 = 0, open2 = 1, listen = 2 };
  static constexpr int kTigerLeft = 0;
  static constexpr int kTigerRight = 1;

  struct Outcome {
    double prob;
    double reward;
    int state;
  };

  explicit TigerEnv(TigerParams p = {}) : p_(p) {}

  std::string name() const override { return "tiger"; }
  std::size_t n_actions() const override { return 3; }
  std::size_t state_dim() const override { return 3; }
  double gamma() const override { return p_.gamma; }
  const TigerParams& params() const { return p_; }

  Tensor reset(Rng& rng) override { return reset_fixed(diff::uniform01(rng) < 0.5 ? kTigerLeft : kTigerRight); }

  Tensor reset_fixed(int phi) {
    if (phi != kTigerLeft && phi != kTigerRight) throw std::invalid_argument("tiger: context must be 0 or 1");
    phi_ = phi;
    state_ = 0;
    steps_ = 0;
    started_ = true;
    return one_hot(0);
  }

  Tensor restart() override {
    if (!started_) throw std::logic_error("tiger: restart before reset");
    return reset_fixed(phi_);
  }

  int context() const { return phi_; }
  int state() const { return state_; }

  static Tensor one_hot(int s) {
    Tensor t = Tensor::zeros({3});
    t[static_cast<std::size_t>(s)] = 1.0;
    return t;
  }

  /// Transition and reward distribution from any state (the state does not
  /// affect dynamics here).
  static std::vector<Outcome> outcomes(const TigerParams& p, int phi, int action) {
    if (action == open1 || action == open2) {
      const bool tiger = (action == open1) == (phi == kTigerLeft);
      return {{1.0, tiger ? p.r_tiger : p.r_gold, 0}};
    }
    const int near = phi == kTigerLeft ? 1 : 2;
    const int far = phi == kTigerLeft ? 2 : 1;
    return {{p.p_correct, p.r_listen, near}, {p.p_wrong, p.r_listen, far}, {1.0 - p.p_correct - p.p_wrong, p.r_listen, 0}};
  }

  StepResult step(int action, Rng& rng) override {
    check_action(action);
    auto outs = outcomes(p_, phi_, action);
    double u = diff::uniform01(rng);
    const Outcome* pick = &outs.back();
    for (const auto& o : outs) {
      if (u < o.prob) {
        pick = &o;
        break;
      }
      u -= o.prob;
    }
    state_ = pick->state;
    ++steps_;
    return {pick->reward, one_hot(state_), false};
  }

  std::unique_ptr<CmdpEnv> clone() const override { return std::make_unique<TigerEnv>(*this); }

 private:
  TigerParams p_;
  int phi_ = kTigerLeft;
  int state_ = 0;
};

/// P(tiger behind door 1 | h) from listen counts, or a point mass once a
/// door has been opened.
class TigerBelief {
 public:
  explicit TigerBelief(TigerParams p = {}) : p_(p) {}

  int n1() const { return n1_; }
  int n2() const { return n2_; }
  bool collapsed() const { return known_.has_value(); }

  double tiger_left() const {
    if (known_) return *known_ == TigerEnv::kTigerLeft ? 1.0 : 0.0;
    // ratio form in log space so large counts stay finite
    const double lo = static_cast<double>(n1_ - n2_) * (std::log(p_.p_correct) - std::log(p_.p_wrong));
    return lo >= 0 ? 1.0 / (1.0 + std::exp(-lo)) : std::exp(lo) / (1.0 + std::exp(lo));
  }

  /// Incorporates (a_t, r_t, s_{t+1}).
  void update(int action, double reward, int next_state) {
    if (action == TigerEnv::listen) {
      if (next_state == 1) ++n1_;
      if (next_state == 2) ++n2_;
      return;
    }
    const bool tiger = reward == p_.r_tiger;
    const bool door1 = action == TigerEnv::open1;
    known_ = (tiger == door1) ? TigerEnv::kTigerLeft : TigerEnv::kTigerRight;
  }

 private:
  TigerParams p_;
  int n1_ = 0;
  int n2_ = 0;
  std::optional<int> known_;
};

}  // namespace ben::envs
