#pragma once

#include <memory>
#include <random>
#include <stdexcept>

#include "ben/benmodel.hpp"
#include "ben/envs.hpp"
#include "ben/trainer/config.hpp"

namespace ben::train {

using diff::ParamStore;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using model::History;

/// Independent stream per (seed, purpose).
inline Rng stream_rng(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), 0x6265'6eu};
  return Rng(seq);
}

enum : std::uint64_t { kEnvStream = 1, kTrainStream = 2, kInitStream = 3, kPsiStream = 4, kPretrainStream = 5 };

inline net::QNetConfig qnet_config(const TrainConfig& cfg, const envs::CmdpEnv& env) {
  net::QNetConfig q;
  q.mode = cfg.history;
  q.state_dim = env.state_dim();
  q.n_actions = env.n_actions();
  q.pre_hidden = cfg.hidden;
  q.post_hidden = cfg.hidden;
  q.gru_hidden = cfg.gru_hidden;
  q.reward_scale = cfg.reward_scale;
  q.value_scale = cfg.value_scale;
  return q;
}

/// Q-network, Bellman model and the posterior the MSBBE samples from.
/// Holds references into itself, so it is neither copied nor moved.
class BenAgent {
 public:
  BenAgent(const TrainConfig& cfg, const envs::CmdpEnv& env, std::uint64_t seed)
      : cfg_(cfg), gamma_(env.gamma()), net_(qnet_config(cfg, env)) {
    cfg_.validate();
    Rng init = stream_rng(seed, kInitStream);
    net_.init(omega_, init);
    if (cfg_.posterior == PosteriorKind::exact_tiger) {
      const auto* tiger = dynamic_cast<const envs::TigerEnv*>(&env);
      if (!tiger) throw std::invalid_argument("exact_tiger posterior needs the tiger environment");
      exact_ = std::make_unique<model::TigerExactPredictive>(tiger->params());
      sampler_ = std::make_unique<model::PushforwardSampler>(*exact_);
      prior_sampler_ = std::make_unique<model::PushforwardSampler>(*exact_);
      return;
    }
    model::AleatoricConfig ac;
    ac.param_dim = cfg_.aleatoric_param_dim;
    ac.hidden_dim = net_.hidden();
    ac.blocks = cfg_.aleatoric_blocks;
    ac.sigma_b = cfg_.sigma_b;
    ac.q_scale = 1.0 / cfg_.value_scale;
    al_ = std::make_unique<model::FlowAleatoric>(ac);
    model::EpistemicConfig ec;
    ec.dim = al_->param_dim();
    ep_ = std::make_unique<model::EpistemicNet>(ec);
    prior_ = model::PriorSpec::isotropic(al_->param_dim(), cfg_.prior_variance);
    Rng prng = stream_rng(seed, kPsiStream);
    ep_->init(psi_, prng);
    al_->init(psi_, prng);
    psi0_ = psi_;
    posterior_phi_ = std::make_unique<model::PosteriorPhi>(*ep_, psi_);
    prior_phi_ = std::make_unique<model::PriorPhi>(prior_);
    sampler_ = std::make_unique<model::FlowSampler>(*al_, psi_, *posterior_phi_);
    prior_sampler_ = std::make_unique<model::FlowSampler>(*al_, psi_, *prior_phi_);
  }

  BenAgent(const BenAgent&) = delete;
  BenAgent& operator=(const BenAgent&) = delete;

  const TrainConfig& config() const { return cfg_; }
  double gamma() const { return gamma_; }
  bool variational() const { return cfg_.posterior == PosteriorKind::variational_flow; }

  const net::QNet& net() const { return net_; }
  ParamStore& omega() { return omega_; }
  const ParamStore& omega() const { return omega_; }
  ParamStore& psi() { return psi_; }
  const ParamStore& psi() const { return psi_; }
  const ParamStore& psi_initial() const { return psi0_; }
  const model::PriorSpec& prior() const { return prior_; }

  const model::EpistemicNet& epistemic() const { need_variational(); return *ep_; }
  const model::FlowAleatoric& aleatoric() const { need_variational(); return *al_; }
  const model::PredictiveModel* exact_model() const { return exact_.get(); }

  /// Bellman samples under the current posterior / under the prior.
  const model::BellmanSampler& posterior_sampler() const { return *sampler_; }
  const model::BellmanSampler& prior_sampler() const { return *prior_sampler_; }

  /// psi back to its freshly initialised value (optimiser state included).
  void reset_psi() { psi_ = psi0_; }

  /// Greedy action at h_t; ties go to the lowest index.
  int act(const History& hist) const {
    const Tensor q = q_values(hist);
    return static_cast<int>(diff::argmax(q));
  }

  Tensor q_values(const History& hist) const {
    const std::size_t t = hist.length();
    Tape tape(false);
    auto u = model::unroll(tape, net_, const_cast<ParamStore&>(omega_), hist, model::window_begin(t, cfg_.truncation), t);
    return u.q.back().value();
  }

 private:
  void need_variational() const {
    if (!ep_) throw std::logic_error("agent has no variational posterior");
  }

  TrainConfig cfg_;
  double gamma_;
  net::QNet net_;
  ParamStore omega_;
  ParamStore psi_;
  ParamStore psi0_;
  model::PriorSpec prior_;
  std::unique_ptr<model::EpistemicNet> ep_;
  std::unique_ptr<model::FlowAleatoric> al_;
  std::unique_ptr<model::PredictiveModel> exact_;
  std::unique_ptr<model::PhiSource> posterior_phi_;
  std::unique_ptr<model::PhiSource> prior_phi_;
  std::unique_ptr<model::BellmanSampler> sampler_;
  std::unique_ptr<model::BellmanSampler> prior_sampler_;
};

}  // namespace ben::train
