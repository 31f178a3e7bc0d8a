#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ben/diffmath.hpp"

namespace ben::model {

using diff::Rng;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Diagonal Gaussian over phi.
struct PriorSpec {
  Tensor mean;
  Tensor variance;

  static PriorSpec isotropic(std::size_t d, double var, double mu = 0.0) {
    if (!(var > 0.0)) throw std::invalid_argument("prior variance must be positive");
    return {Tensor({d}, mu), Tensor({d}, var)};
  }

  std::size_t dim() const { return mean.size(); }

  void validate() const {
    if (mean.size() != variance.size()) throw diff::ShapeError("prior mean/variance size mismatch");
    for (double v : variance.values())
      if (!(v > 0.0)) throw std::invalid_argument("prior variance must be positive");
  }

  Var log_density(Tape& tape, const Var& phi) const {
    if (phi.size() != dim()) throw diff::ShapeError("prior: phi width mismatch");
    Tensor inv(variance.shape());
    double c = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      inv[i] = -0.5 / variance[i];
      c -= 0.5 * std::log(2.0 * std::numbers::pi * variance[i]);
    }
    Var d = phi - tape.constant(mean);
    return diff::shift(diff::sum(diff::square(d) * tape.constant(inv)), c);
  }

  Tensor sample(Rng& rng) const {
    Tensor t(mean.shape());
    for (std::size_t i = 0; i < dim(); ++i) t[i] = mean[i] + std::sqrt(variance[i]) * diff::standard_normal(rng);
    return t;
  }
};

}  // namespace ben::model
