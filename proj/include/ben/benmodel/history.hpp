#pragma once

#include <stdexcept>
#include <vector>

#include "ben/diffmath.hpp"
#include "ben/netblocks/qnet.hpp"

namespace ben::model {

using diff::ParamStore;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using net::Observation;
using net::QNet;

struct Transition {
  int action;
  double reward;
  Tensor next_state;
};

/// h_t = (s_0, a_0, r_0, s_1, ..., s_t).
struct History {
  Tensor s0;
  std::vector<Transition> steps;

  std::size_t length() const { return steps.size(); }
  const Tensor& state(std::size_t i) const { return i == 0 ? s0 : steps.at(i - 1).next_state; }

  void append(int a, double r, Tensor s) { steps.push_back({a, r, std::move(s)}); }

  /// Network input at prefix i when the unroll starts at `begin`; the first
  /// observation of a window carries no previous action or reward.
  Observation observation(std::size_t i, std::size_t begin = 0) const {
    if (i == begin) return {0.0, state(i), -1};
    const Transition& tr = steps.at(i - 1);
    return {tr.reward, tr.next_state, tr.action};
  }
};

/// Window start for truncation length t' (0 means no truncation).
inline std::size_t window_begin(std::size_t t, std::size_t truncation) {
  return (truncation == 0 || t <= truncation) ? 0 : t - truncation;
}

/// Encodings and q-vectors at prefixes begin..end (inclusive).
struct Unroll {
  std::size_t begin = 0;
  std::vector<Var> h;  // h[k]: encoding after observing prefix begin + k
  std::vector<Var> q;

  const Var& h_at(std::size_t i) const { return h.at(i - begin); }
  const Var& q_at(std::size_t i) const { return q.at(i - begin); }
};

inline Unroll unroll(Tape& tape, const QNet& net, ParamStore& omega, const History& hist, std::size_t begin,
                     std::size_t end) {
  if (end > hist.length() || begin > end) throw std::out_of_range("unroll window outside the history");
  Unroll u;
  u.begin = begin;
  Var h = tape.constant(net.initial_state());
  for (std::size_t i = begin; i <= end; ++i) {
    net::QOut out = net.step(tape, omega, h, hist.observation(i, begin));
    h = out.h;
    u.h.push_back(out.h);
    u.q.push_back(out.q);
  }
  return u;
}

struct BootstrapSample {
  double b = 0.0;
  double q = 0.0;
  Tensor h_hat;  // encoding at h_i (the q used in p(b | h_i, a_i))
  std::size_t index = 0;
  int action = 0;
};

/// b_i = r_i + gamma max_a Q(h_{i+1}, a) and q_i = Q(h_i, a_i) for every
/// transition of the window [begin, end], from one unroll.
inline std::vector<BootstrapSample> bootstrap_from_unroll(const Unroll& u, const History& hist, double gamma,
                                                          std::size_t end) {
  std::vector<BootstrapSample> out;
  for (std::size_t i = u.begin; i < end; ++i) {
    const Transition& tr = hist.steps[i];
    BootstrapSample s;
    s.index = i;
    s.action = tr.action;
    s.q = u.q_at(i)[static_cast<std::size_t>(tr.action)];
    s.h_hat = u.h_at(i).value();
    double m = u.q_at(i + 1)[0];
    for (std::size_t a = 1; a < u.q_at(i + 1).size(); ++a) m = std::max(m, u.q_at(i + 1)[a]);
    s.b = tr.reward + gamma * m;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<BootstrapSample> bootstrap(const QNet& net, ParamStore& omega, double gamma, const History& hist,
                                              std::size_t begin, std::size_t end) {
  if (end <= begin) throw std::invalid_argument("bootstrap needs a window with at least two states");
  Tape tape(false);
  Unroll u = unroll(tape, net, omega, hist, begin, end);
  return bootstrap_from_unroll(u, hist, gamma, end);
}

}  // namespace ben::model
