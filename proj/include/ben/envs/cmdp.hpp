#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "ben/diffmath.hpp"

namespace ben::envs {

using diff::Rng;
using diff::Tensor;

struct StepResult {
  double reward = 0.0;
  Tensor state;
  bool done = false;  // episode cap reached
};

/// Context-parametrised MDP. The context is hidden from the agent.
class CmdpEnv {
 public:
  virtual ~CmdpEnv() = default;
  virtual std::string name() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual double gamma() const = 0;

  /// Draws a fresh context from the prior.
  virtual Tensor reset(Rng& rng) = 0;
  /// New episode in the same context (episodic settings).
  virtual Tensor restart() = 0;
  virtual StepResult step(int action, Rng& rng) = 0;
  virtual std::unique_ptr<CmdpEnv> clone() const = 0;

  bool started() const { return started_; }
  std::size_t steps() const { return steps_; }

 protected:
  void check_action(int a) const {
    if (!started_) throw std::logic_error(name() + ": step before reset");
    if (a < 0 || a >= static_cast<int>(n_actions()))
      throw std::out_of_range(name() + ": invalid action index " + std::to_string(a));
  }
  bool started_ = false;
  std::size_t steps_ = 0;
};

}  // namespace ben::envs
