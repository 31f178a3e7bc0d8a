#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ben/trainer/agent.hpp"
#include "ben/trainer/metrics.hpp"

namespace ben::train {

using diff::Var;

/// A loss or gradient went non-finite inside a training step.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline diff::AdamConfig adam(double lr, double clip) {
  diff::AdamConfig a;
  a.lr = lr;
  a.clip_norm = clip;
  return a;
}

inline double descend(Tape& tape, Var loss, ParamStore& store, const diff::AdamConfig& opt, const char* what) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << what << " loss is " << v;
    throw NonFiniteLoss(os.str());
  }
  tape.backward(loss);
  try {
    diff::adam_step(store, opt);
  } catch (const diff::DomainError& e) {
    throw NonFiniteLoss(std::string(what) + ": " + e.what());
  }
  return v;
}

/// `points` prefixes of [begin, end], always including end; empty = all of them.
inline std::vector<std::size_t> sample_prefixes(std::size_t begin, std::size_t end, std::size_t points, Rng& rng) {
  const std::size_t n = end - begin + 1;
  if (points == 0 || points >= n) return {};
  std::vector<std::size_t> pool(n - 1);
  std::iota(pool.begin(), pool.end(), begin);
  std::vector<std::size_t> out;
  // partial Fisher-Yates
  for (std::size_t k = 0; k + 1 < points; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
    out.push_back(pool[k]);
  }
  out.push_back(end);
  std::sort(out.begin(), out.end());
  return out;
}

/// Runs one loss-and-step phase; domain errors from the ops become NonFiniteLoss.
template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const diff::DomainError& e) {
    throw NonFiniteLoss(std::string(what) + ": " + e.what());
  }
}

}  // namespace detail

/// Which parts of a prior dataset a mode may use.
inline envs::PriorDataset dataset_for_mode(const envs::PriorDataset& ds, Mode mode) {
  envs::PriorDataset out = ds;
  if (mode == Mode::episodic_tabula_rasa) {
    out.pairs.clear();
    out.listening_demonstrations = false;
  } else if (mode == Mode::episodic_weak_prior) {
    out.listening_demonstrations = false;
  }
  return out;
}

inline Tensor initial_state(const envs::CmdpEnv& env) {
  auto probe = env.clone();
  Rng r(0);
  return probe->reset(r);
}

/// MSBBE at s0 under the prior: exact when the posterior is exact, otherwise
/// the mean of n double-sampled estimates.
inline double msbbe_at_s0(BenAgent& agent, const Tensor& s0, std::size_t n, Rng& rng) {
  History h0{s0, {}};
  if (agent.exact_model())
    return model::exact_msbbe_value(agent.net(), agent.omega(), h0, *agent.exact_model(), agent.gamma(), true);
  Tape tape(false);
  model::MsbbeOptions opt;
  opt.n_mc = n;
  opt.last_only = true;
  return model::msbbe_loss(tape, agent.net(), agent.omega(), h0, 0, 0, agent.prior_sampler(), agent.gamma(), opt, rng)
      .item();
}

struct PretrainReport {
  std::size_t steps = 0;
  double msbbe_before = std::numeric_limits<double>::quiet_NaN();
  double msbbe_after = std::numeric_limits<double>::quiet_NaN();
};

/// Prior-predictive rollout in a freshly drawn simulated context: epsilon-greedy
/// on the current Q, snapshots before every action.
inline std::pair<History, std::unique_ptr<model::SimulatorPredictive>> demonstration(BenAgent& agent,
                                                                                     const envs::CmdpEnv& proto,
                                                                                     Rng& rng) {
  const TrainConfig& cfg = agent.config();
  auto env = proto.clone();
  History h{env->reset(rng), {}};
  auto sim = std::make_unique<model::SimulatorPredictive>();
  Tensor hid = agent.net().initial_state();
  std::uniform_int_distribution<int> any(0, static_cast<int>(env->n_actions()) - 1);
  for (std::size_t k = 0; k < cfg.pretrain_horizon; ++k) {
    auto [next_h, q] = net::qnet_step(agent.net(), agent.omega(), hid, h.observation(k, 0));
    hid = next_h;
    const int a = diff::uniform01(rng) < cfg.pretrain_epsilon ? any(rng) : static_cast<int>(diff::argmax(q));
    sim->push(*env);
    envs::StepResult r = env->step(a, rng);
    h.append(a, r.reward, r.state);
    if (r.done) break;
  }
  return {std::move(h), std::move(sim)};
}

/// N_pretrain descent steps on omega, each summing (a) the s0 MSBBE under the
/// prior, (b) double-sampled Bellman errors on shared-dynamics pairs, (c) the
/// MSBBE over a simulated demonstration when the dataset asks for one.
inline PretrainReport prior_initialisation(BenAgent& agent, const envs::CmdpEnv& proto,
                                           const envs::PriorDataset& dataset, Rng& rng) {
  const TrainConfig& cfg = agent.config();
  PretrainReport rep;
  const Tensor s0 = initial_state(proto);
  if (cfg.n_pretrain == 0) return rep;
  Rng probe = rng;
  rep.msbbe_before = msbbe_at_s0(agent, s0, 256, probe);

  std::unique_ptr<model::SarSharedPredictive> shared;
  if (!dataset.pairs.empty()) {
    const auto* sar = dynamic_cast<const envs::SearchRescueEnv*>(&proto);
    if (!sar) throw std::invalid_argument("prior pairs are defined for search-and-rescue only");
    shared = std::make_unique<model::SarSharedPredictive>(sar->params());
  }
  const auto opt = detail::adam(cfg.lr_omega, cfg.clip_norm);
  const History h0{s0, {}};
  for (std::size_t step = 0; step < cfg.n_pretrain; ++step) detail::guarded("pretraining MSBBE", [&] {
    Tape tape;
    model::MsbbeOptions at0;
    at0.n_mc = cfg.n_mc;
    at0.last_only = true;
    Var loss = model::msbbe_loss(tape, agent.net(), agent.omega(), h0, 0, 0, agent.prior_sampler(), agent.gamma(),
                                 at0, rng);
    if (shared) {
      model::PushforwardSampler pair_sampler(*shared);
      std::uniform_int_distribution<std::size_t> pick(0, dataset.pairs.size() - 1);
      const std::size_t m = std::max<std::size_t>(1, cfg.pretrain_pairs);
      std::vector<Var> parts;
      for (std::size_t k = 0; k < m; ++k) {
        const auto& pr = dataset.pairs[pick(rng)];
        History hp{pr.state, {}};
        model::MsbbeOptions po;
        po.n_mc = cfg.n_mc;
        po.actions = {pr.action};
        parts.push_back(model::msbbe_loss(tape, agent.net(), agent.omega(), hp, 0, 0, pair_sampler, agent.gamma(), po,
                                          rng));
      }
      loss = loss + diff::mean(diff::concat(parts));
    }
    if (dataset.listening_demonstrations) {
      auto [demo, sim] = demonstration(agent, proto, rng);
      // an exact posterior gives the Bayesian target directly; otherwise step the simulator
      model::PushforwardSampler demo_sampler(agent.exact_model() ? *agent.exact_model()
                                                                 : static_cast<const model::PredictiveModel&>(*sim));
      model::MsbbeOptions dopt;
      dopt.n_mc = cfg.n_mc;
      // the last state has no snapshot to step from
      const std::size_t last = demo.length() - 1;
      dopt.points = detail::sample_prefixes(0, last, cfg.pretrain_points, rng);
      if (dopt.points.empty())
        for (std::size_t i = 0; i <= last; ++i) dopt.points.push_back(i);
      Var l = model::msbbe_loss(tape, agent.net(), agent.omega(), demo, 0, demo.length(), demo_sampler, agent.gamma(),
                                dopt, rng);
      loss = loss + l;
    }
    detail::descend(tape, loss, agent.omega(), opt, "pretraining MSBBE");
    agent.psi().zero_grad();
    ++rep.steps;
  });
  Rng probe2 = rng;
  rep.msbbe_after = msbbe_at_s0(agent, s0, 256, probe2);
  return rep;
}

struct UpdateReport {
  std::size_t elbo_steps = 0;
  std::size_t msbbe_steps = 0;
  double msbbe = std::numeric_limits<double>::quiet_NaN();
  double elbo = std::numeric_limits<double>::quiet_NaN();
};

/// N_update rounds of: N_posterior ELBO steps on psi with omega fixed, then
/// one MSBBE step on omega over the last t' steps of the history.
inline UpdateReport posterior_updating(BenAgent& agent, const History& hist, Rng& rng) {
  const TrainConfig& cfg = agent.config();
  if (hist.length() == 0) throw std::invalid_argument("posterior_updating needs at least one transition");
  const std::size_t t = hist.length();
  const std::size_t begin = model::window_begin(t, cfg.truncation);
  const auto opt_omega = detail::adam(cfg.lr_omega, cfg.clip_norm);
  const auto opt_psi = detail::adam(cfg.lr_psi, cfg.clip_norm);
  UpdateReport rep;
  for (std::size_t u = 0; u < cfg.n_update; ++u) {
    if (agent.variational()) {
      const auto samples = detail::guarded(
          "bootstrap", [&] { return model::bootstrap(agent.net(), agent.omega(), agent.gamma(), hist, begin, t); });
      std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
      for (std::size_t k = 0; k < cfg.n_posterior; ++k) {
        model::ElboOptions eo;
        eo.n_mc = cfg.n_mc;
        std::vector<model::BootstrapSample> batch;
        if (cfg.schedule == ElboSchedule::interleaved) {
          batch.push_back(samples[pick(rng)]);
          eo.prior_weight = 1.0 / static_cast<double>(samples.size());
        } else {
          batch = samples;
        }
        rep.elbo = detail::guarded("ELBO", [&] {
          Tape tape;
          Var loss = model::elbo_loss(tape, agent.epistemic(), agent.aleatoric(), agent.psi(), batch, agent.prior(),
                                      eo, rng);
          return detail::descend(tape, loss, agent.psi(), opt_psi, "ELBO");
        });
        ++rep.elbo_steps;
      }
    }
    rep.msbbe = detail::guarded("MSBBE", [&] {
      Tape tape;
      model::MsbbeOptions mo;
      mo.n_mc = cfg.n_mc;
      mo.points = detail::sample_prefixes(begin, t, cfg.msbbe_points, rng);
      Var loss = model::msbbe_loss(tape, agent.net(), agent.omega(), hist, begin, t, agent.posterior_sampler(),
                                   agent.gamma(), mo, rng);
      return detail::descend(tape, loss, agent.omega(), opt_omega, "MSBBE");
    });
    agent.psi().zero_grad();
    ++rep.msbbe_steps;
  }
  return rep;
}

inline std::size_t episode_cap(const TrainConfig& cfg, const envs::CmdpEnv& env) {
  if (cfg.episode_cap > 0) return cfg.episode_cap;
  if (const auto* sar = dynamic_cast<const envs::SearchRescueEnv*>(&env))
    return static_cast<std::size_t>(sar->params().cap());
  return 11;
}

struct SeedResult {
  PretrainReport pretrain;
  std::size_t elbo_steps = 0;
  std::size_t msbbe_steps = 0;
};

/// One seed of the outer loop on a clone of `proto`. Appends to `out`.
inline SeedResult run_seed(const TrainConfig& cfg, const envs::CmdpEnv& proto, const envs::PriorDataset& dataset,
                           std::uint64_t seed, RunMetrics& out) {
  if (cfg.mode == Mode::zero_shot_strong_prior && cfg.episodes != 1)
    throw std::invalid_argument("zero-shot runs a single episode");
  SeedResult res;
  auto env = proto.clone();
  Rng env_rng = stream_rng(seed, kEnvStream);
  Rng train_rng = stream_rng(seed, kTrainStream);
  Rng pre_rng = stream_rng(seed, kPretrainStream);
  BenAgent agent(cfg, *env, seed);
  const envs::PriorDataset ds = dataset_for_mode(dataset, cfg.mode);
  std::size_t episode = 0, t = 0;
  auto where = [&] {
    std::ostringstream os;
    os << "seed " << seed << ", episode " << episode << ", t " << t << ": ";
    return os.str();
  };
  try {
    res.pretrain = prior_initialisation(agent, *env, ds, pre_rng);
    Tensor s = env->reset(env_rng);
    const std::size_t cap = episode_cap(cfg, *env);
    const auto* sar = dynamic_cast<const envs::SearchRescueEnv*>(env.get());
    for (episode = 0; episode < cfg.episodes; ++episode) {
      if (episode > 0) {
        s = env->restart();
        agent.reset_psi();
      }
      History hist{s, {}};
      double cum = 0.0;
      for (t = 0; t < cap; ++t) {
        const int a = detail::guarded("action selection", [&] { return agent.act(hist); });
        envs::StepResult r = env->step(a, env_rng);
        hist.append(a, r.reward, r.state);
        cum += r.reward;
        UpdateReport up = posterior_updating(agent, hist, train_rng);
        res.elbo_steps += up.elbo_steps;
        res.msbbe_steps += up.msbbe_steps;
        StepRecord rec;
        rec.seed = seed;
        rec.episode = episode;
        rec.t = t;
        rec.action = a;
        rec.reward = r.reward;
        rec.cum_return = cum;
        if (sar) {
          rec.victims_saved = sar->victims_saved();
          rec.hazards_hit = sar->hazards_hit();
        }
        rec.msbbe = up.msbbe;
        rec.elbo = up.elbo;
        out.append(rec);
        if (r.done) break;
      }
    }
  } catch (const NonFiniteLoss& e) {
    throw TrainingDiverged(where() + e.what(), out);
  }
  return res;
}

/// Outer loop over every configured seed.
inline RunMetrics approx_brl(const TrainConfig& cfg, const envs::CmdpEnv& proto,
                             const envs::PriorDataset& dataset = {}) {
  cfg.validate();
  RunMetrics m;
  for (std::uint64_t seed : cfg.seeds) run_seed(cfg, proto, dataset, seed, m);
  return m;
}

}  // namespace ben::train
