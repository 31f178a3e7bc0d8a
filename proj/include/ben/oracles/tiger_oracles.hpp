#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ben/envs/tiger.hpp"

namespace ben::oracles {

using envs::TigerBelief;
using envs::TigerEnv;
using envs::TigerParams;
using diff::Rng;

struct ContextualValues {
  double q_correct;
  double q_wrong;
};

/// Known-context values: open the gold door forever, or hit the tiger once
/// and then do that.
inline ContextualValues contextual_q_values(const TigerParams& p) {
  if (!(p.gamma >= 0.0 && p.gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  const double qc = p.r_gold / (1.0 - p.gamma);
  return {qc, p.r_tiger + p.gamma * qc};
}

/// Value of the posterior mixture of contextual optima at prior
/// P(tiger left) = prior: it picks the right door with probability
/// prior^2 + (1 - prior)^2.
inline double qbrl_value(const TigerParams& p, double prior) {
  if (prior < 0.0 || prior > 1.0) throw std::invalid_argument("prior must lie in [0, 1]");
  const auto q = contextual_q_values(p);
  const double hit = prior * prior + (1.0 - prior) * (1.0 - prior);
  return hit * q.q_correct + (1.0 - hit) * q.q_wrong;
}

inline double listen_forever_value(const TigerParams& p) { return p.r_listen / (1.0 - p.gamma); }

/// Values as printed in the source analysis; kept for the oracle table only.
struct PrintedValues {
  double q_wrong = -155.0;
  double j_qbrl = -27.5;
};

struct ActionValues {
  double open1, open2, listen;
};

/// Belief-grid value function over b = P(tiger left).
class BeliefGrid {
 public:
  BeliefGrid(TigerParams p = {}, std::size_t resolution = 2001) : p_(p), v_(resolution, 0.0) {
    if (resolution < 3) throw std::invalid_argument("belief grid needs at least 3 points");
  }

  std::size_t resolution() const { return v_.size(); }
  const std::vector<double>& values() const { return v_; }
  const std::vector<double>& residuals() const { return residuals_; }
  const TigerParams& params() const { return p_; }
  double point(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(v_.size() - 1); }

  double value(double b) const { return interpolate(v_, b); }

  ActionValues action_values(double b) const { return action_values(v_, b); }

  /// Synchronous sweeps until the sup-norm change drops below tol.
  /// Returns the number of sweeps.
  std::size_t solve(double tol = 1e-8, std::size_t max_sweeps = 2000) {
    residuals_.clear();
    std::vector<double> next(v_.size());
    for (std::size_t k = 1; k <= max_sweeps; ++k) {
      double res = 0.0;
      for (std::size_t i = 0; i < v_.size(); ++i) {
        const ActionValues a = action_values(v_, point(i));
        next[i] = std::max({a.open1, a.open2, a.listen});
        res = std::max(res, std::abs(next[i] - v_[i]));
      }
      v_.swap(next);
      residuals_.push_back(res);
      if (res < tol) return k;
    }
    throw std::runtime_error("belief value iteration did not converge within the sweep cap");
  }

  /// Bellman residual of the current values.
  double residual() const {
    double res = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) {
      const ActionValues a = action_values(v_, point(i));
      res = std::max(res, std::abs(std::max({a.open1, a.open2, a.listen}) - v_[i]));
    }
    return res;
  }

  /// Listen posterior after observing s1 / s2 from belief b.
  static double after_s1(const TigerParams& p, double b) {
    return p.p_correct * b / (p.p_correct * b + p.p_wrong * (1.0 - b));
  }
  static double after_s2(const TigerParams& p, double b) {
    return p.p_wrong * b / (p.p_wrong * b + p.p_correct * (1.0 - b));
  }

 private:
  static double interpolate(const std::vector<double>& v, double b) {
    b = std::clamp(b, 0.0, 1.0);
    const double pos = b * static_cast<double>(v.size() - 1);
    std::size_t i = static_cast<std::size_t>(pos);
    if (i >= v.size() - 1) return v.back();
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * v[i] + w * v[i + 1];
  }

  ActionValues action_values(const std::vector<double>& v, double b) const {
    const double qc = contextual_q_values(p_).q_correct;
    const double tiger = p_.r_tiger + p_.gamma * qc;
    const double gold = p_.r_gold + p_.gamma * qc;
    ActionValues a;
    a.open1 = b * tiger + (1.0 - b) * gold;
    a.open2 = b * gold + (1.0 - b) * tiger;
    const double p1 = p_.p_correct * b + p_.p_wrong * (1.0 - b);
    const double p2 = p_.p_wrong * b + p_.p_correct * (1.0 - b);
    const double p0 = 1.0 - p1 - p2;
    double cont = p0 * interpolate(v, b);
    if (p1 > 0) cont += p1 * interpolate(v, after_s1(p_, b));
    if (p2 > 0) cont += p2 * interpolate(v, after_s2(p_, b));
    a.listen = p_.r_listen + p_.gamma * cont;
    return a;
  }

  TigerParams p_;
  std::vector<double> v_;
  std::vector<double> residuals_;
};

/// Greedy action of the solved grid at belief b; ties go to listen.
inline int bayes_optimal_action(const BeliefGrid& grid, double b) {
  const ActionValues a = grid.action_values(b);
  const double best_open = std::max(a.open1, a.open2);
  if (a.listen >= best_open) return TigerEnv::listen;
  return a.open1 >= a.open2 ? TigerEnv::open1 : TigerEnv::open2;
}

/// Posterior mixture of contextual optima: open door 2 with probability
/// P(tiger left), door 1 otherwise. Never listens.
inline int qbrl_policy_action(double belief, Rng& rng) {
  if (belief < 0.0 || belief > 1.0) throw std::invalid_argument("belief must lie in [0, 1]");
  return diff::uniform01(rng) < belief ? TigerEnv::open2 : TigerEnv::open1;
}

struct RolloutReturn {
  double discounted = 0.0;
  double undiscounted = 0.0;
};

/// One episode in a fresh prior draw under a belief-based policy.
inline RolloutReturn tiger_rollout(const TigerParams& p, const std::function<int(const TigerBelief&, Rng&)>& policy,
                                   std::size_t horizon, Rng& rng) {
  TigerEnv env(p);
  env.reset(rng);
  TigerBelief belief(p);
  RolloutReturn out;
  double disc = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const int a = policy(belief, rng);
    auto r = env.step(a, rng);
    out.discounted += disc * r.reward;
    out.undiscounted += r.reward;
    disc *= p.gamma;
    belief.update(a, r.reward, env.state());
  }
  return out;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline MonteCarloEstimate summarize(const std::vector<double>& xs) {
  MonteCarloEstimate e;
  e.n = xs.size();
  if (xs.empty()) return e;
  for (double x : xs) e.mean += x;
  e.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - e.mean) * (x - e.mean);
  if (xs.size() > 1) e.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return e;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of nothing");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Horizon after which discounted tails are below tol (relative to |r| <= 500).
inline std::size_t effective_horizon(double gamma, double tol = 1e-10) {
  return static_cast<std::size_t>(std::ceil(std::log(tol / 500.0) / std::log(gamma))) + 1;
}

}  // namespace ben::oracles
