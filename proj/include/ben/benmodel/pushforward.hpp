#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ben/benmodel/history.hpp"

namespace ben::model {

/// One-step Bellman pushforward when only the reward is random and
/// r -> beta(r) = r + gamma max_a' Q(h . (a, r, s'), a') is strictly increasing.
/// Density of b by change of variables: p_R(beta^{-1}(b)) / beta'(beta^{-1}(b)).
class BijectiveBellmanDensity {
 public:
  BijectiveBellmanDensity(const QNet& net, ParamStore& omega, const History& hist, int action, Tensor next_state,
                          double gamma, std::function<double(double)> reward_logpdf, double r_lo, double r_hi)
      : net_(net), omega_(omega), action_(action), next_(std::move(next_state)), gamma_(gamma),
        logp_(std::move(reward_logpdf)), lo_(r_lo), hi_(r_hi) {
    if (!(r_lo < r_hi)) throw std::invalid_argument("pushforward: empty reward range");
    if (net.config().mode != net::HistoryMode::recurrent)
      throw std::invalid_argument("pushforward: contextual nets ignore the reward input");
    Tape t(false);
    Unroll u = unroll(t, net, omega, hist, 0, hist.length());
    h_ = u.h.back().value();
  }

  double beta(double r) const { return eval(r, false).first; }
  double dbeta(double r) const { return eval(r, true).second; }

  /// beta^{-1}(b) by safeguarded Newton on [r_lo, r_hi].
  double inverse(double b) const {
    double a = lo_, c = hi_;
    double fa = beta(a) - b, fc = beta(c) - b;
    if (fa > 0 || fc < 0) throw diff::DomainError("pushforward: b outside beta([r_lo, r_hi])");
    double r = 0.5 * (a + c);
    for (int it = 0; it < 200; ++it) {
      auto [f, df] = eval(r, true);
      f -= b;
      if (std::abs(f) < 1e-13) break;
      if (f < 0) a = r; else c = r;
      double next = df > 0 ? r - f / df : 0.5 * (a + c);
      if (!(next > a && next < c)) next = 0.5 * (a + c);
      if (std::abs(next - r) < 1e-14) {
        r = next;
        break;
      }
      r = next;
    }
    return r;
  }

  double log_density(double b) const {
    const double r = inverse(b);
    const double d = dbeta(r);
    if (!(d > 0.0)) throw diff::DomainError("pushforward: beta not increasing at the preimage");
    return logp_(r) - std::log(d);
  }

  double r_lo() const { return lo_; }
  double r_hi() const { return hi_; }

 private:
  // (beta(r), beta'(r)); the derivative comes from the tape w.r.t. the reward input.
  std::pair<double, double> eval(double r, bool deriv) const {
    Tape t(deriv);
    Observation o{r, next_, action_};
    Var x = deriv ? t.leaf(net_.encode(o)) : t.constant(net_.encode(o));
    Var m = diff::max_over_axis(net_.step_encoded(t, omega_, t.constant(h_), x).q);
    const double b = r + gamma_ * m.item();
    if (!deriv) return {b, 0.0};
    // parameter gradients land in omega's grad buffers; undo them
    std::vector<Tensor> saved;
    for (auto& [_, e] : omega_.entries()) saved.push_back(e.grad);
    t.backward(m);
    std::size_t k = 0;
    for (auto& [_, e] : omega_.entries()) e.grad = saved[k++];
    const double dm = t.grad(x)[0] * net_.config().reward_scale;
    return {b, 1.0 + gamma_ * dm};
  }

  const QNet& net_;
  ParamStore& omega_;
  int action_;
  Tensor next_;
  double gamma_;
  std::function<double(double)> logp_;
  double lo_, hi_;
  Tensor h_;
};

}  // namespace ben::model
