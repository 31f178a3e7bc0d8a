#pragma once

#include <stdexcept>
#include <vector>

#include "ben/benmodel/aleatoric.hpp"
#include "ben/benmodel/epistemic.hpp"
#include "ben/benmodel/history.hpp"
#include "ben/benmodel/prior.hpp"

namespace ben::model {

struct ElboOptions {
  std::size_t n_mc = 1;
  double prior_weight = 1.0;  // 1/t for a per-step term L_t
  bool drop_prior = false;    // flat prior: no log p(phi) term
};

/// Negative ELBO, Monte-Carlo over z_ep:
///   mean_k [ -sum_i log p(b_i | h_i, q_i, phi_k) - w (log p(phi_k) + logdet_k) ],
/// phi_k = t_psi(z_k). Differentiable w.r.t. psi (epistemic and conditioner weights).
inline Var elbo_loss(Tape& tape, const EpistemicNet& ep, const AleatoricModel& al, ParamStore& psi,
                     const std::vector<BootstrapSample>& samples, const PriorSpec& prior, const ElboOptions& opt,
                     Rng& rng) {
  if (opt.n_mc < 1) throw std::invalid_argument("elbo: n_mc must be >= 1");
  if (ep.dim() != al.param_dim()) throw diff::ShapeError("elbo: epistemic width differs from aleatoric parameter width");
  if (!opt.drop_prior && prior.dim() != ep.dim()) throw diff::ShapeError("elbo: prior width mismatch");
  std::vector<Var> per;
  for (std::size_t k = 0; k < opt.n_mc; ++k) {
    Var z = tape.constant(diff::normal_tensor({ep.dim()}, rng));
    flows::Transformed phi = ep.sample(tape, psi, z);
    std::vector<Var> lik;
    for (const auto& s : samples) {
      Var h = tape.constant(s.h_hat);
      lik.push_back(al.log_prob(tape, psi, false, phi.value, h, tape.constant(s.q), tape.constant(s.b), rng));
    }
    Var nll = lik.empty() ? tape.constant(0.0) : diff::neg(diff::sum(diff::concat(lik)));
    Var reg = opt.drop_prior ? phi.logdet : prior.log_density(tape, phi.value) + phi.logdet;
    per.push_back(nll - diff::scale(reg, opt.prior_weight));
  }
  return diff::mean(diff::concat(per));
}

inline double elbo_value(const EpistemicNet& ep, const AleatoricModel& al, ParamStore& psi,
                         const std::vector<BootstrapSample>& samples, const PriorSpec& prior, const ElboOptions& opt,
                         Rng& rng) {
  Tape t(false);
  return elbo_loss(t, ep, al, psi, samples, prior, opt, rng).item();
}

}  // namespace ben::model
