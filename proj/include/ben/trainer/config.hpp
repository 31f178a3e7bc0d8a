#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ben/netblocks/qnet.hpp"

namespace ben::train {

enum class Mode { episodic_tabula_rasa, episodic_weak_prior, zero_shot_strong_prior };
enum class PosteriorKind { variational_flow, exact_tiger };
enum class ElboSchedule { interleaved, batched };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::episodic_tabula_rasa: return "episodic_tabula_rasa";
    case Mode::episodic_weak_prior: return "episodic_weak_prior";
    case Mode::zero_shot_strong_prior: return "zero_shot_strong_prior";
  }
  return "?";
}
inline std::string to_string(PosteriorKind k) {
  return k == PosteriorKind::exact_tiger ? "exact_tiger" : "variational_flow";
}
inline std::string to_string(ElboSchedule s) { return s == ElboSchedule::batched ? "batched" : "interleaved"; }

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::episodic_tabula_rasa, Mode::episodic_weak_prior, Mode::zero_shot_strong_prior})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mode '" + s + "'");
}
inline PosteriorKind parse_posterior(const std::string& s) {
  if (s == "exact_tiger") return PosteriorKind::exact_tiger;
  if (s == "variational_flow") return PosteriorKind::variational_flow;
  throw std::invalid_argument("unknown posterior kind '" + s + "'");
}
inline ElboSchedule parse_schedule(const std::string& s) {
  if (s == "interleaved") return ElboSchedule::interleaved;
  if (s == "batched") return ElboSchedule::batched;
  throw std::invalid_argument("unknown elbo schedule '" + s + "'");
}

struct TrainConfig {
  // optimisation
  std::size_t n_pretrain = 0;
  std::size_t n_update = 1;     // MSBBE steps per observation
  std::size_t n_posterior = 4;  // ELBO steps per MSBBE step
  double lr_omega = 0.02;
  double lr_psi = 1e-4;
  double clip_norm = 10.0;
  std::size_t truncation = 64;  // t'; 0 = full history
  std::size_t n_mc = 1;
  std::size_t msbbe_points = 1;  // prefixes per online MSBBE step, h_t always among them; 0 = whole window

  // episodes
  std::size_t episode_cap = 0;  // 0: the environment's own cap (tiger has none: 11)
  std::size_t episodes = 1;
  std::vector<std::uint64_t> seeds{0};
  Mode mode = Mode::zero_shot_strong_prior;
  PosteriorKind posterior = PosteriorKind::variational_flow;
  ElboSchedule schedule = ElboSchedule::interleaved;

  // Q-network
  net::HistoryMode history = net::HistoryMode::recurrent;
  std::size_t hidden = 32;
  std::size_t gru_hidden = 2;
  double reward_scale = 1.0;
  double value_scale = 1.0;

  // Bellman model
  std::size_t aleatoric_blocks = 2;
  std::size_t aleatoric_param_dim = 0;  // 0: largest layer demand
  double sigma_b = 1.0;
  double prior_variance = 0.1;

  // pretraining
  std::uint64_t pretrain_seed = 0;
  std::size_t pretrain_horizon = 11;  // rollout / demonstration length
  double pretrain_epsilon = 0.3;      // behaviour exploration during pretraining only
  std::size_t pretrain_pairs = 8;     // D_prior pairs per step
  std::size_t pretrain_points = 0;    // demonstration prefixes per step; 0 = all

  void validate() const {
    if (n_posterior < 1) throw std::invalid_argument("n_posterior must be >= 1");
    if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
    if (!(lr_omega > 0) || !(lr_psi > 0)) throw std::invalid_argument("learning rates must be positive");
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("no seeds");
    if (hidden == 0 || gru_hidden == 0) throw std::invalid_argument("zero network width");
    if (aleatoric_blocks < 1) throw std::invalid_argument("aleatoric_blocks must be >= 1");
    if (!(prior_variance > 0)) throw std::invalid_argument("prior_variance must be positive");
    if (!(sigma_b > 0)) throw std::invalid_argument("sigma_b must be positive");
    if (pretrain_epsilon < 0 || pretrain_epsilon > 1) throw std::invalid_argument("pretrain_epsilon outside [0, 1]");
  }
};

}  // namespace ben::train
