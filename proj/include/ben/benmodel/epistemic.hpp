#pragma once

#include <memory>
#include <string>

#include "ben/flows.hpp"

namespace ben::model {

using flows::FlowStack;
using flows::StoreProvider;
using flows::Transformed;

struct EpistemicConfig {
  enum class Kind { full, affine };
  Kind kind = Kind::full;
  std::size_t dim = 1;
  std::size_t made_hidden = 0;  // 0: 2 * dim
  bool data_init = true;        // actnorm data initialisation from base samples
};

/// phi = t_psi(z_ep), z_ep ~ N(0, I).
/// full: actnorm, maf, reverse, maf, actnorm, lu, reverse.
/// affine: actnorm, lu (a general Gaussian).
class EpistemicNet {
 public:
  explicit EpistemicNet(EpistemicConfig cfg, std::string prefix = "ep/")
      : cfg_(cfg), prefix_(std::move(prefix)), stack_(cfg.dim) {
    using AR = flows::AutoregressiveAffine;
    const std::size_t d = cfg_.dim;
    const std::size_t hid = cfg_.made_hidden ? cfg_.made_hidden : 2 * d;
    if (cfg_.kind == EpistemicConfig::Kind::full) {
      stack_.emplace<flows::ActNorm>(d);
      stack_.emplace<AR>(d, d > 1 ? hid : 0, AR::Kind::maf);
      stack_.add(std::make_shared<flows::Permutation>(flows::Permutation::reversed(d)));
      stack_.emplace<AR>(d, d > 1 ? hid : 0, AR::Kind::maf);
      stack_.emplace<flows::ActNorm>(d);
      stack_.emplace<flows::LuLinear>(d);
      stack_.add(std::make_shared<flows::Permutation>(flows::Permutation::reversed(d)));
    } else {
      stack_.emplace<flows::ActNorm>(d);
      stack_.emplace<flows::LuLinear>(d);
    }
  }

  const EpistemicConfig& config() const { return cfg_; }
  std::size_t dim() const { return cfg_.dim; }
  const FlowStack& stack() const { return stack_; }
  const std::string& prefix() const { return prefix_; }

  /// Identity map at init (MADE output layers start at zero), followed by
  /// optional actnorm data initialisation on base draws.
  void init(ParamStore& psi, Rng& rng) const {
    stack_.init(psi, prefix_, rng);
    for (std::size_t i = 0; i < stack_.size(); ++i) {
      const std::string lp = StoreProvider::layer_prefix(prefix_, i);
      if (psi.contains(lp + "W2")) psi.value(lp + "W2").fill(0.0);
    }
    if (!cfg_.data_init) return;
    std::vector<Tensor> batch;
    for (int k = 0; k < 256; ++k) batch.push_back(diff::normal_tensor({cfg_.dim}, rng));
    for (std::size_t i = 0; i < stack_.size(); ++i) {
      const auto* an = dynamic_cast<const flows::ActNorm*>(&stack_.layer(i));
      StoreProvider p(psi, prefix_);
      if (an) an->data_init(psi, StoreProvider::layer_prefix(prefix_, i), batch);
      for (auto& b : batch) {
        Tape t(false);
        b = stack_.layer(i).forward(t, t.constant(b), p.layer(i)).value.value();
      }
    }
  }

  Transformed sample(Tape& tape, ParamStore& psi, const Var& z, bool frozen = false) const {
    StoreProvider p(psi, prefix_, frozen);
    return stack_.forward(tape, z, p);
  }

  /// phi value only (no gradient bookkeeping).
  Tensor sample_value(ParamStore& psi, const Tensor& z) const {
    Tape t(false);
    return sample(t, psi, t.constant(z)).value.value();
  }

  Tensor draw(ParamStore& psi, Rng& rng) const { return sample_value(psi, diff::normal_tensor({cfg_.dim}, rng)); }

 private:
  EpistemicConfig cfg_;
  std::string prefix_;
  FlowStack stack_;
};

/// Tensor-level epistemic_sample: (phi, forward logdet).
inline flows::FlowSample epistemic_sample(const EpistemicNet& net, ParamStore& psi, const Tensor& z) {
  Tape t(false);
  Transformed out = net.sample(t, psi, t.constant(z));
  return {out.value.value(), out.logdet.item()};
}

}  // namespace ben::model
