#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ben/benmodel/aleatoric.hpp"
#include "ben/benmodel/epistemic.hpp"
#include "ben/benmodel/history.hpp"
#include "ben/benmodel/prior.hpp"
#include "ben/envs/search_rescue.hpp"
#include "ben/envs/tiger.hpp"

namespace ben::model {

struct PredictiveOutcome {
  double prob = 1.0;
  double reward = 0.0;
  Tensor state;
};

/// Model-based posterior predictive over (r, s') at a history prefix:
/// draw phi from the posterior at h_t, then the transition under phi.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;
  virtual PredictiveOutcome sample(const History& hist, std::size_t t, int action, Rng& rng) const = 0;
  virtual bool enumerable() const { return false; }
  /// Marginal outcome list (probabilities sum to 1).
  virtual std::vector<PredictiveOutcome> enumerate(const History&, std::size_t, int) const {
    throw std::logic_error("predictive model cannot enumerate outcomes");
  }
};

inline int tiger_state_index(const Tensor& s) { return static_cast<int>(diff::argmax(s)); }

/// Two-point tiger posterior recomputed from the prefix.
class TigerExactPredictive : public PredictiveModel {
 public:
  explicit TigerExactPredictive(envs::TigerParams p = {}) : p_(p) {}

  double tiger_left(const History& hist, std::size_t t) const {
    envs::TigerBelief bel(p_);
    for (std::size_t i = 0; i < t; ++i) {
      const Transition& tr = hist.steps.at(i);
      bel.update(tr.action, tr.reward, tiger_state_index(tr.next_state));
    }
    return bel.tiger_left();
  }

  PredictiveOutcome sample(const History& hist, std::size_t t, int action, Rng& rng) const override {
    const int phi = diff::uniform01(rng) < tiger_left(hist, t) ? envs::TigerEnv::kTigerLeft : envs::TigerEnv::kTigerRight;
    auto outs = envs::TigerEnv::outcomes(p_, phi, action);
    double u = diff::uniform01(rng);
    const auto* pick = &outs.back();
    for (const auto& o : outs) {
      if (u < o.prob) {
        pick = &o;
        break;
      }
      u -= o.prob;
    }
    return {1.0, pick->reward, envs::TigerEnv::one_hot(pick->state)};
  }

  bool enumerable() const override { return true; }

  std::vector<PredictiveOutcome> enumerate(const History& hist, std::size_t t, int action) const override {
    const double bl = tiger_left(hist, t);
    std::vector<PredictiveOutcome> out;
    for (int phi : {envs::TigerEnv::kTigerLeft, envs::TigerEnv::kTigerRight}) {
      const double w = phi == envs::TigerEnv::kTigerLeft ? bl : 1.0 - bl;
      if (w == 0.0) continue;
      for (const auto& o : envs::TigerEnv::outcomes(p_, phi, action))
        if (o.prob > 0.0) out.push_back({w * o.prob, o.reward, envs::TigerEnv::one_hot(o.state)});
    }
    return out;
  }

 private:
  envs::TigerParams p_;
};

/// Known generating MDP (simulated demonstrations): snapshot k is the
/// environment just before the action at step k.
class SimulatorPredictive : public PredictiveModel {
 public:
  void push(const envs::CmdpEnv& env) { snaps_.push_back(env.clone()); }
  std::size_t size() const { return snaps_.size(); }

  PredictiveOutcome sample(const History&, std::size_t t, int action, Rng& rng) const override {
    if (t >= snaps_.size()) throw std::out_of_range("no simulator snapshot for step " + std::to_string(t));
    auto env = snaps_[t]->clone();
    envs::StepResult r = env->step(action, rng);
    return {1.0, r.reward, r.state};
  }

 private:
  std::vector<std::unique_ptr<envs::CmdpEnv>> snaps_;
};

/// Search-and-rescue dynamics shared by every context: deterministic moves
/// and the prior-averaged door reward.
class SarSharedPredictive : public PredictiveModel {
 public:
  explicit SarSharedPredictive(envs::SarParams p) : p_(p) { p_.validate(); }

  bool enumerable() const override { return true; }

  std::vector<PredictiveOutcome> enumerate(const History& hist, std::size_t t, int action) const override {
    if (action == envs::SearchRescueEnv::listen) throw std::invalid_argument("listen outcomes depend on the context");
    const Tensor& s = hist.state(t);
    const auto [dx, dy] = envs::SearchRescueEnv::delta(action);
    const int x = static_cast<int>(s[0]), y = static_cast<int>(s[1]);
    Tensor next = Tensor::zeros(s.shape());
    next[0] = x;
    next[1] = y;
    if (std::abs(x + dx) <= p_.half() && std::abs(y + dy) <= p_.half()) {
      next[0] = x + dx;
      next[1] = y + dy;
      return {{1.0, 0.0, next}};
    }
    const double nd = p_.n_doors();
    const double pv = p_.n_victims / nd, ph = p_.n_hazards / nd;
    return {{pv, p_.r_victim, next}, {ph, p_.r_hazard, next}, {1.0 - pv - ph, 0.0, next}};
  }

  PredictiveOutcome sample(const History& hist, std::size_t t, int action, Rng& rng) const override {
    auto outs = enumerate(hist, t, action);
    double u = diff::uniform01(rng);
    for (const auto& o : outs) {
      if (u < o.prob) return o;
      u -= o.prob;
    }
    return outs.back();
  }

 private:
  envs::SarParams p_;
};

/// What a Bellman sample at (h_i, a) is conditioned on.
struct BellmanQuery {
  const QNet& net;
  ParamStore& omega;
  const History& hist;
  std::size_t t;
  Var h;  // encoding at h_t
  Var q;  // q-vector at h_t
  double gamma;
};

/// Draws b ~ P_B(h_t, a) as a differentiable function of omega. Exact and
/// variational posteriors plug in here interchangeably.
class BellmanSampler {
 public:
  virtual ~BellmanSampler() = default;
  virtual Var sample(Tape& tape, const BellmanQuery& qr, int action, Rng& rng) const = 0;
};

/// b = r + gamma max_a' Q(h_{t+1}, a') with (r, s') from a predictive model.
class PushforwardSampler : public BellmanSampler {
 public:
  explicit PushforwardSampler(const PredictiveModel& model) : model_(model) {}

  Var sample(Tape& tape, const BellmanQuery& qr, int action, Rng& rng) const override {
    PredictiveOutcome o = model_.sample(qr.hist, qr.t, action, rng);
    net::QOut next = qr.net.step(tape, qr.omega, qr.h, Observation{o.reward, o.state, action});
    return diff::shift(diff::scale(diff::max_over_axis(next.q), qr.gamma), o.reward);
  }

  const PredictiveModel& model() const { return model_; }

 private:
  const PredictiveModel& model_;
};

/// Source of epistemic draws phi.
class PhiSource {
 public:
  virtual ~PhiSource() = default;
  virtual Tensor draw(Rng& rng) const = 0;
};

class PriorPhi : public PhiSource {
 public:
  explicit PriorPhi(const PriorSpec& prior) : prior_(prior) {}
  Tensor draw(Rng& rng) const override { return prior_.sample(rng); }

 private:
  const PriorSpec& prior_;
};

class PosteriorPhi : public PhiSource {
 public:
  PosteriorPhi(const EpistemicNet& net, ParamStore& psi) : net_(net), psi_(psi) {}
  Tensor draw(Rng& rng) const override { return net_.draw(psi_, rng); }

 private:
  const EpistemicNet& net_;
  ParamStore& psi_;
};

/// b = B(z_al, q, phi) with phi from `phis`; psi is held fixed.
class FlowSampler : public BellmanSampler {
 public:
  FlowSampler(const AleatoricModel& al, ParamStore& psi, const PhiSource& phis) : al_(al), psi_(psi), phis_(phis) {}

  Var sample(Tape& tape, const BellmanQuery& qr, int action, Rng& rng) const override {
    Var phi = tape.constant(phis_.draw(rng));
    return al_.sample(tape, psi_, true, phi, qr.h, diff::index(qr.q, static_cast<std::size_t>(action)), rng);
  }

 private:
  const AleatoricModel& al_;
  ParamStore& psi_;
  const PhiSource& phis_;
};

struct MsbbeOptions {
  std::size_t n_mc = 1;
  std::vector<int> actions;  // empty: uniform over all actions
  bool last_only = false;    // evaluate at h_end only, not every prefix of the window
  std::vector<std::size_t> points;  // explicit prefixes inside the window (overrides last_only)
};

/// Double-sampled squared Bellman error over the prefixes [begin, end] of a
/// window: mean of (b - q_a)(b' - q_a) with independent b, b'.
inline Var msbbe_loss(Tape& tape, const QNet& net, ParamStore& omega, const History& hist, std::size_t begin,
                      std::size_t end, const BellmanSampler& sampler, double gamma, const MsbbeOptions& opt,
                      Rng& rng) {
  if (opt.n_mc < 1) throw std::invalid_argument("msbbe: n_mc must be >= 1");
  Unroll u = unroll(tape, net, omega, hist, begin, end);
  std::vector<int> acts = opt.actions;
  if (acts.empty())
    for (std::size_t a = 0; a < net.config().n_actions; ++a) acts.push_back(static_cast<int>(a));
  std::vector<std::size_t> pts = opt.points;
  if (pts.empty())
    for (std::size_t i = opt.last_only ? end : begin; i <= end; ++i) pts.push_back(i);
  std::vector<Var> terms;
  for (std::size_t i : pts) {
    if (i < begin || i > end) throw std::out_of_range("msbbe: prefix outside the window");
    BellmanQuery qr{net, omega, hist, i, u.h_at(i), u.q_at(i), gamma};
    for (int a : acts) {
      Var qa = diff::index(u.q_at(i), static_cast<std::size_t>(a));
      for (std::size_t k = 0; k < opt.n_mc; ++k) {
        Var b1 = sampler.sample(tape, qr, a, rng);
        Var b2 = sampler.sample(tape, qr, a, rng);
        terms.push_back((b1 - qa) * (b2 - qa));
      }
    }
  }
  return diff::mean(diff::concat(terms));
}

inline Var msbbe_loss(Tape& tape, const QNet& net, ParamStore& omega, const History& hist,
                      const BellmanSampler& sampler, double gamma, const MsbbeOptions& opt, Rng& rng) {
  return msbbe_loss(tape, net, omega, hist, 0, hist.length(), sampler, gamma, opt, rng);
}

/// Model-based marginalised Bellman operator at (h_t, a) by enumeration.
inline Var exact_bellman(Tape& tape, const QNet& net, ParamStore& omega, const History& hist, std::size_t t,
                         const Var& h, int action, const PredictiveModel& model, double gamma) {
  std::vector<Var> parts;
  for (const auto& o : model.enumerate(hist, t, action)) {
    net::QOut next = net.step(tape, omega, h, Observation{o.reward, o.state, action});
    parts.push_back(diff::scale(diff::shift(diff::scale(diff::max_over_axis(next.q), gamma), o.reward), o.prob));
  }
  return diff::sum(diff::concat(parts));
}

/// Squared Bellman error with exact expectations, mean over actions and prefixes.
inline Var exact_msbbe(Tape& tape, const QNet& net, ParamStore& omega, const History& hist, std::size_t begin,
                       std::size_t end, const PredictiveModel& model, double gamma, const std::vector<int>& actions = {},
                       bool last_only = false) {
  Unroll u = unroll(tape, net, omega, hist, begin, end);
  std::vector<int> acts = actions;
  if (acts.empty())
    for (std::size_t a = 0; a < net.config().n_actions; ++a) acts.push_back(static_cast<int>(a));
  std::vector<Var> terms;
  for (std::size_t i = last_only ? end : begin; i <= end; ++i)
    for (int a : acts) {
      Var e = exact_bellman(tape, net, omega, hist, i, u.h_at(i), a, model, gamma) -
              diff::index(u.q_at(i), static_cast<std::size_t>(a));
      terms.push_back(diff::square(e));
    }
  return diff::mean(diff::concat(terms));
}

inline double exact_msbbe_value(const QNet& net, ParamStore& omega, const History& hist, const PredictiveModel& model,
                                double gamma, bool last_only = true) {
  Tape t(false);
  return exact_msbbe(t, net, omega, hist, 0, hist.length(), model, gamma, {}, last_only).item();
}

struct McMean {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Monte-Carlo B+[Q](h_t, a): mean of n_mc Bellman samples.
inline McMean predictive_bellman(const QNet& net, ParamStore& omega, const History& hist, std::size_t t, int action,
                                 const BellmanSampler& sampler, double gamma, std::size_t n_mc, Rng& rng) {
  if (n_mc < 1) throw std::invalid_argument("predictive_bellman: n_mc must be >= 1");
  Tape tape(false);
  Unroll u = unroll(tape, net, omega, hist, 0, t);
  BellmanQuery qr{net, omega, hist, t, u.h_at(t), u.q_at(t), gamma};
  const std::size_t mark = tape.size();
  // Welford: a constant sample sequence gives its value back exactly
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < n_mc; ++k) {
    const double b = sampler.sample(tape, qr, action, rng).item();
    const double d = b - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (b - mean);
    if (tape.size() > mark + 4096) {
      // keep the unroll, drop per-sample nodes
      tape.clear();
      u = unroll(tape, net, omega, hist, 0, t);
      qr.h = u.h_at(t);
      qr.q = u.q_at(t);
    }
  }
  McMean m;
  m.n = n_mc;
  m.mean = mean;
  const double var = n_mc > 1 ? m2 / static_cast<double>(n_mc - 1) : 0.0;
  m.std_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(n_mc));
  return m;
}

inline double exact_bellman_value(const QNet& net, ParamStore& omega, const History& hist, std::size_t t, int action,
                                  const PredictiveModel& model, double gamma) {
  Tape tape(false);
  Unroll u = unroll(tape, net, omega, hist, 0, t);
  return exact_bellman(tape, net, omega, hist, t, u.h_at(t), action, model, gamma).item();
}

}  // namespace ben::model
