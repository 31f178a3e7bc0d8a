#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ben/flows.hpp"
#include "ben/netblocks/mlp.hpp"

namespace ben::model {

using diff::ParamStore;
using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Conditional model p(b | h_hat, q, phi) with reparameterised sampling.
class AleatoricModel {
 public:
  virtual ~AleatoricModel() = default;
  virtual std::size_t param_dim() const = 0;
  virtual void init(ParamStore& psi, Rng& rng) const = 0;
  /// b = B(z_al, q, phi); z_al drawn inside.
  virtual Var sample(Tape& tape, ParamStore& psi, bool frozen, const Var& phi, const Var& h_hat, const Var& q,
                     Rng& rng) const = 0;
  /// log p(b | h_hat, q, phi); surjective layers use one stochastic-inverse draw.
  virtual Var log_prob(Tape& tape, ParamStore& psi, bool frozen, const Var& phi, const Var& h_hat, const Var& q,
                       const Var& b, Rng& rng) const = 0;
};

struct AleatoricConfig {
  std::size_t param_dim = 0;   // 0: the largest per-layer demand
  std::size_t hidden_dim = 1;  // width of h_hat
  std::size_t blocks = 2;      // [iaf, lu, permutation] repeats
  std::size_t iaf_hidden = 0;  // 0: masked linear conditioner inside the iaf
  double sigma_b = 1.0;        // b = q + sigma_b * F(z)
  double q_scale = 1.0;        // q enters the conditioner as q * q_scale
  double conditioner_gain = 0.1;
};

/// F: R^2 -> R with base N(0, I_2): `blocks` of [iaf, lu_linear, swap], then
/// slice to the first coordinate. log_prob pads the dropped coordinate with a
/// N(0,1) draw, so it is a single-sample lower-bound estimate.
/// Each parameterised layer has its own conditioner [phi, h_hat, q] -> R^d;
/// the layer reads the leading entries it needs.
class FlowAleatoric : public AleatoricModel {
 public:
  explicit FlowAleatoric(AleatoricConfig cfg, std::string prefix = "al/") : cfg_(cfg), prefix_(std::move(prefix)) {
    using AR = flows::AutoregressiveAffine;
    if (cfg_.blocks == 0) throw std::invalid_argument("aleatoric flow needs at least one block");
    stack_ = flows::FlowStack(2);
    for (std::size_t k = 0; k < cfg_.blocks; ++k) {
      stack_.emplace<AR>(2, cfg_.iaf_hidden, AR::Kind::iaf);
      stack_.emplace<flows::LuLinear>(2);
      stack_.add(std::make_shared<flows::Permutation>(flows::Permutation::reversed(2)));
    }
    stack_.emplace<flows::Slice>(2, 1);
    std::size_t demand = 0;
    for (std::size_t i = 0; i < stack_.size(); ++i) demand = std::max(demand, stack_.layer(i).param_count());
    if (cfg_.param_dim == 0) cfg_.param_dim = demand;
    if (cfg_.param_dim < demand)
      throw diff::ShapeError("aleatoric parameter width " + std::to_string(cfg_.param_dim) + " below layer demand " +
                             std::to_string(demand));
    const std::size_t d = cfg_.param_dim;
    for (std::size_t i = 0; i < stack_.size(); ++i) {
      if (stack_.layer(i).param_count() == 0) {
        conds_.emplace_back();
        continue;
      }
      conds_.emplace_back(net::MlpSpec{d + cfg_.hidden_dim + 1, {d, d}, {net::Activation::relu, net::Activation::none}},
                          prefix_ + "c" + std::to_string(i) + "/");
    }
  }

  const AleatoricConfig& config() const { return cfg_; }
  const flows::FlowStack& stack() const { return stack_; }
  std::size_t param_dim() const override { return cfg_.param_dim; }
  std::size_t conditioner_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < stack_.size(); ++i) n += stack_.layer(i).param_count() > 0;
    return n;
  }

  void init(ParamStore& psi, Rng& rng) const override {
    for (std::size_t i = 0; i < stack_.size(); ++i)
      if (stack_.layer(i).param_count() > 0) conds_[i].init(psi, rng, cfg_.conditioner_gain);
  }

  flows::CouplingProvider couplings(Tape& tape, ParamStore& psi, bool frozen, const Var& phi, const Var& h_hat,
                                    const Var& q) const {
    check(phi, h_hat);
    Var in = diff::concat({phi, h_hat, diff::scale(q, cfg_.q_scale)});
    std::vector<Var> per;
    for (std::size_t i = 0; i < stack_.size(); ++i)
      per.push_back(stack_.layer(i).param_count() > 0 ? conds_[i].forward(tape, psi, in, frozen) : Var());
    return flows::CouplingProvider(per);
  }

  Var sample(Tape& tape, ParamStore& psi, bool frozen, const Var& phi, const Var& h_hat, const Var& q,
             Rng& rng) const override {
    auto prov = couplings(tape, psi, frozen, phi, h_hat, q);
    Var z = tape.constant(diff::normal_tensor({2}, rng));
    Var x = stack_.forward(tape, z, prov).value;
    return q + diff::scale(diff::index(x, 0), cfg_.sigma_b);
  }

  Var log_prob(Tape& tape, ParamStore& psi, bool frozen, const Var& phi, const Var& h_hat, const Var& q, const Var& b,
               Rng& rng) const override {
    auto prov = couplings(tape, psi, frozen, phi, h_hat, q);
    Var x = diff::reshape(diff::scale(b - q, 1.0 / cfg_.sigma_b), {1});
    return diff::shift(stack_.log_prob(tape, x, prov, rng), -std::log(cfg_.sigma_b));
  }

 private:
  void check(const Var& phi, const Var& h_hat) const {
    if (phi.size() != cfg_.param_dim) throw diff::ShapeError("aleatoric: phi width mismatch");
    if (h_hat.size() != cfg_.hidden_dim) throw diff::ShapeError("aleatoric: encoding width mismatch");
  }

  AleatoricConfig cfg_;
  std::string prefix_;
  flows::FlowStack stack_{2};
  std::vector<net::Mlp> conds_;
};

/// b = q + sigma (phi . f(h_hat) + z), f = leading entries of (1, h_hat)
/// padded with zeros. Linear-Gaussian in phi; used for analytic checks.
class AffineAleatoric : public AleatoricModel {
 public:
  AffineAleatoric(std::size_t param_dim, std::size_t hidden_dim, double sigma)
      : d_(param_dim), hidden_(hidden_dim), sigma_(sigma) {
    if (d_ == 0) throw diff::ShapeError("affine aleatoric: zero width");
  }

  std::size_t param_dim() const override { return d_; }
  void init(ParamStore&, Rng&) const override {}
  double sigma() const { return sigma_; }

  /// (1, h_hat) truncated or zero-padded to the parameter width.
  Var features(Tape& tape, const Var& h_hat) const {
    if (h_hat.size() != hidden_) throw diff::ShapeError("affine aleatoric: encoding width mismatch");
    Var f = diff::concat({tape.constant(Tensor::vector({1.0})), diff::reshape(h_hat, {hidden_})});
    if (f.size() >= d_) return diff::slice(f, 0, d_);
    return diff::concat({f, tape.constant(Tensor::zeros({d_ - f.size()}))});
  }

  Var sample(Tape& tape, ParamStore&, bool, const Var& phi, const Var& h_hat, const Var& q, Rng& rng) const override {
    Var mean = diff::sum(phi * features(tape, h_hat));
    return q + diff::scale(mean + tape.constant(diff::standard_normal(rng)), sigma_);
  }

  Var log_prob(Tape& tape, ParamStore&, bool, const Var& phi, const Var& h_hat, const Var& q, const Var& b,
               Rng&) const override {
    if (sigma_ == 0.0) throw diff::DomainError("affine aleatoric: zero scale, inverse derivative vanishes");
    Var mean = diff::sum(phi * features(tape, h_hat));
    Var z = diff::scale(b - q, 1.0 / sigma_) - mean;
    return diff::shift(flows::std_normal_logpdf(z), -std::log(std::abs(sigma_)));
  }

 private:
  std::size_t d_;
  std::size_t hidden_;
  double sigma_;
};

}  // namespace ben::model
