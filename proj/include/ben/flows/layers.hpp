#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ben/diffmath.hpp"
#include "ben/flows/param_source.hpp"

namespace ben::flows {

inline constexpr double kScaleFloor = 1e-4;

/// Raw offset so that a zero raw parameter maps to scale 1.
inline double scale_offset() { return diff::softplus_inverse(1.0 - kScaleFloor); }

/// softplus(raw + offset) + floor; strictly positive.
inline Var positive_scale(const Var& raw) { return diff::shift(diff::softplus(diff::shift(raw, scale_offset())), kScaleFloor); }

/// Raw value giving a target scale (> floor).
inline double raw_for_scale(double target) {
  if (!(target > kScaleFloor)) throw diff::DomainError("scale must exceed the floor");
  return diff::softplus_inverse(target - kScaleFloor) - scale_offset();
}

inline double std_normal_logpdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

/// Sum over entries of log N(v; 0, 1).
inline Var std_normal_logpdf(const Var& v) {
  const double c = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(v.size());
  return diff::shift(diff::scale(diff::sum(diff::square(v)), -0.5), c);
}

struct ParamDecl {
  std::string name;
  Shape shape;
};

/// Layer output and its log-density bookkeeping term.
/// forward: logdet such that log p(x) = log p(z) - logdet.
/// inverse: term such that log p(x) = log p(z) + term.
struct Transformed {
  Var value;
  Var logdet;
};

class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t in_dim() const = 0;   // base side
  virtual std::size_t out_dim() const = 0;  // data side
  virtual bool bijective() const { return true; }
  virtual std::vector<ParamDecl> params() const { return {}; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params()) n += diff::shape_size(p.shape);
    return n;
  }

  virtual Transformed forward(Tape& tape, const Var& z, ParamSource& src) const = 0;
  virtual Transformed inverse(Tape& tape, const Var& x, ParamSource& src, Rng& rng) const = 0;

  // Zero parameters mean identity for every layer here; subclasses may
  // override to randomise hidden weights.
  virtual void init(ParamStore& store, const std::string& prefix, Rng&) const {
    for (const auto& p : params()) store.add(prefix + p.name, Tensor::zeros(p.shape));
  }

 protected:
  std::vector<Var> fetch(Tape& tape, ParamSource& src) const {
    std::vector<Var> out;
    for (const auto& p : params()) out.push_back(src.get(tape, p.name, p.shape));
    return out;
  }
  void check_in(const Var& v, std::size_t d, const char* where) const {
    if (v.size() != d)
      throw diff::ShapeError(kind() + " " + where + ": width " + std::to_string(v.size()) + ", expected " +
                             std::to_string(d));
  }
};

/// x = z * exp(logs) + shift
class ActNorm : public FlowLayer {
 public:
  explicit ActNorm(std::size_t dim) : dim_(dim) {}
  std::string kind() const override { return "actnorm"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  std::vector<ParamDecl> params() const override { return {{"logs", {dim_}}, {"shift", {dim_}}}; }

  Transformed forward(Tape& tape, const Var& z, ParamSource& src) const override {
    check_in(z, dim_, "forward");
    auto p = fetch(tape, src);
    return {diff::exp(p[0]) * z + p[1], diff::sum(p[0])};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource& src, Rng&) const override {
    check_in(x, dim_, "inverse");
    auto p = fetch(tape, src);
    return {(x - p[1]) * diff::exp(-p[0]), -diff::sum(p[0])};
  }

  /// Sets parameters so this layer's outputs on `batch` have zero mean and
  /// unit variance per coordinate.
  void data_init(ParamStore& store, const std::string& prefix, const std::vector<Tensor>& batch) const {
    if (batch.size() < 2) throw std::invalid_argument("actnorm data init needs at least two samples");
    Tensor& logs = store.value(prefix + "logs");
    Tensor& shift = store.value(prefix + "shift");
    for (std::size_t j = 0; j < dim_; ++j) {
      double m = 0.0, m2 = 0.0;
      for (const auto& b : batch) m += b[j];
      m /= static_cast<double>(batch.size());
      for (const auto& b : batch) m2 += (b[j] - m) * (b[j] - m);
      const double sd = std::sqrt(m2 / static_cast<double>(batch.size())) + 1e-6;
      logs[j] = -std::log(sd);
      shift[j] = -m / sd;
    }
  }

 private:
  std::size_t dim_;
};

/// Affine autoregressive transform with a MADE conditioner.
/// iaf: x_i = mu_i(z_<i) + s_i(z_<i) z_i   (parallel sampling)
/// maf: x_i = mu_i(x_<i) + s_i(x_<i) z_i   (parallel density)
/// hidden = 0 gives a masked linear conditioner.
class AutoregressiveAffine : public FlowLayer {
 public:
  enum class Kind { maf, iaf };

  AutoregressiveAffine(std::size_t dim, std::size_t hidden, Kind kind) : dim_(dim), hidden_(hidden), kind_(kind) {
    if (dim == 0) throw diff::ShapeError("autoregressive layer of width 0");
    build_masks();
  }
  std::string kind() const override { return kind_ == Kind::maf ? "maf" : "iaf"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  std::size_t hidden() const { return hidden_; }

  std::vector<ParamDecl> params() const override {
    if (hidden_ == 0) return {{"W", {2 * dim_, dim_}}, {"b", {2 * dim_}}};
    return {{"W1", {hidden_, dim_}}, {"b1", {hidden_}}, {"W2", {2 * dim_, hidden_}}, {"b2", {2 * dim_}}};
  }

  void init(ParamStore& store, const std::string& prefix, Rng& rng) const override {
    if (hidden_ == 0) {
      FlowLayer::init(store, prefix, rng);
      return;
    }
    store.add(prefix + "W1", diff::fan_in_uniform({hidden_, dim_}, dim_, rng));
    store.add(prefix + "b1", diff::fan_in_uniform({hidden_}, dim_, rng));
    Tensor w2 = diff::fan_in_uniform({2 * dim_, hidden_}, hidden_, rng);
    for (auto& v : w2.values()) v *= 0.1;
    store.add(prefix + "W2", std::move(w2));
    store.add(prefix + "b2", Tensor::zeros({2 * dim_}));
  }

  /// (mu, scale) for conditioning input u; entry i depends on u_<i only.
  std::pair<Var, Var> conditioner(Tape& tape, const std::vector<Var>& p, const Var& u) const {
    Var out;
    if (hidden_ == 0) {
      out = diff::affine(p[0] * tape.constant(mask_out_), u, p[1]);
    } else {
      Var h = diff::tanh(diff::affine(p[0] * tape.constant(mask_in_), u, p[1]));
      out = diff::affine(p[2] * tape.constant(mask_out_), h, p[3]);
    }
    return {diff::slice(out, 0, dim_), positive_scale(diff::slice(out, dim_, 2 * dim_))};
  }

  Transformed forward(Tape& tape, const Var& z, ParamSource& src) const override {
    check_in(z, dim_, "forward");
    auto p = fetch(tape, src);
    if (kind_ == Kind::iaf) {
      auto [mu, s] = conditioner(tape, p, z);
      return {mu + s * z, diff::sum(diff::log(s))};
    }
    // maf sampling: sequential in the coordinate order
    std::vector<Var> xs;
    Var logdet = tape.constant(0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      auto [mu, s] = conditioner(tape, p, partial(tape, xs));
      Var si = diff::index(s, i);
      xs.push_back(diff::index(mu, i) + si * diff::index(z, i));
      logdet = logdet + diff::log(si);
    }
    return {diff::concat(xs), logdet};
  }

  Transformed inverse(Tape& tape, const Var& x, ParamSource& src, Rng&) const override {
    check_in(x, dim_, "inverse");
    auto p = fetch(tape, src);
    if (kind_ == Kind::maf) {
      auto [mu, s] = conditioner(tape, p, x);
      return {(x - mu) / s, -diff::sum(diff::log(s))};
    }
    std::vector<Var> zs;
    Var term = tape.constant(0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      auto [mu, s] = conditioner(tape, p, partial(tape, zs));
      Var si = diff::index(s, i);
      zs.push_back((diff::index(x, i) - diff::index(mu, i)) / si);
      term = term - diff::log(si);
    }
    return {diff::concat(zs), term};
  }

 private:
  // known prefix padded with zeros (the padded entries are masked out)
  Var partial(Tape& tape, const std::vector<Var>& known) const {
    if (known.empty()) return tape.constant(Tensor::zeros({dim_}));
    std::vector<Var> parts = known;
    if (known.size() < dim_) parts.push_back(tape.constant(Tensor::zeros({dim_ - known.size()})));
    return diff::concat(parts);
  }

  void build_masks() {
    if (hidden_ == 0) {
      mask_out_ = Tensor::zeros({2 * dim_, dim_});
      for (std::size_t j = 0; j < dim_; ++j)
        for (std::size_t i = 0; i < j; ++i) {
          mask_out_.at(j, i) = 1.0;
          mask_out_.at(dim_ + j, i) = 1.0;
        }
      return;
    }
    // input degree i+1, hidden degrees cycle over 1..dim-1, output degree j+1
    std::vector<std::size_t> hdeg(hidden_);
    for (std::size_t k = 0; k < hidden_; ++k) hdeg[k] = dim_ > 1 ? k % (dim_ - 1) + 1 : 0;
    mask_in_ = Tensor::zeros({hidden_, dim_});
    for (std::size_t k = 0; k < hidden_; ++k)
      for (std::size_t i = 0; i < dim_; ++i) mask_in_.at(k, i) = (dim_ > 1 && hdeg[k] >= i + 1) ? 1.0 : 0.0;
    mask_out_ = Tensor::zeros({2 * dim_, hidden_});
    for (std::size_t j = 0; j < dim_; ++j)
      for (std::size_t k = 0; k < hidden_; ++k) {
        const double m = (dim_ > 1 && j + 1 > hdeg[k]) ? 1.0 : 0.0;
        mask_out_.at(j, k) = m;
        mask_out_.at(dim_ + j, k) = m;
      }
  }

  std::size_t dim_;
  std::size_t hidden_;
  Kind kind_;
  Tensor mask_in_;
  Tensor mask_out_;
};

/// x = P L U z + bias, L unit lower, U upper with positive diagonal.
class LuLinear : public FlowLayer {
 public:
  explicit LuLinear(std::size_t dim, std::vector<std::size_t> perm = {}) : dim_(dim), perm_(std::move(perm)) {
    if (perm_.empty())
      for (std::size_t i = 0; i < dim_; ++i) perm_.push_back(i);
    if (perm_.size() != dim_) throw diff::ShapeError("lu_linear: permutation length mismatch");
    inv_perm_.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) inv_perm_[perm_[i]] = i;
  }
  std::string kind() const override { return "lu_linear"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  std::vector<ParamDecl> params() const override {
    return {{"L", {dim_, dim_}}, {"U", {dim_, dim_}}, {"d", {dim_}}, {"bias", {dim_}}};
  }

  Transformed forward(Tape& tape, const Var& z, ParamSource& src) const override {
    check_in(z, dim_, "forward");
    auto p = fetch(tape, src);
    Var diag = positive_scale(p[2]);
    Var y = diff::matmul(diff::unit_lower(p[0]), diff::matmul(diff::upper_with_diag(p[1], diag), z));
    return {diff::permute(y, perm_) + p[3], diff::sum(diff::log(diag))};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource& src, Rng&) const override {
    check_in(x, dim_, "inverse");
    auto p = fetch(tape, src);
    Var diag = positive_scale(p[2]);
    Var y = diff::permute(x - p[3], inv_perm_);
    Var w = diff::tri_solve(diff::unit_lower(p[0]), y, true, true);
    Var z = diff::tri_solve(diff::upper_with_diag(p[1], diag), w, false, false);
    return {z, -diff::sum(diff::log(diag))};
  }

 private:
  std::size_t dim_;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inv_perm_;
};

/// x_i = z_{perm[i]}
class Permutation : public FlowLayer {
 public:
  explicit Permutation(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
    inv_.assign(perm_.size(), perm_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) {
      if (perm_[i] >= perm_.size() || inv_[perm_[i]] != perm_.size())
        throw std::invalid_argument("permutation layer: not a permutation");
      inv_[perm_[i]] = i;
    }
  }
  static Permutation reversed(std::size_t dim) {
    std::vector<std::size_t> p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = dim - 1 - i;
    return Permutation(p);
  }
  /// Fixed pseudo-random permutation from a seed.
  static Permutation shuffled(std::size_t dim, std::uint64_t seed) {
    std::vector<std::size_t> p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = i;
    Rng rng(seed);
    std::shuffle(p.begin(), p.end(), rng);
    return Permutation(p);
  }
  std::string kind() const override { return "permutation"; }
  std::size_t in_dim() const override { return perm_.size(); }
  std::size_t out_dim() const override { return perm_.size(); }
  const std::vector<std::size_t>& perm() const { return perm_; }

  Transformed forward(Tape& tape, const Var& z, ParamSource&) const override {
    check_in(z, perm_.size(), "forward");
    return {diff::permute(z, perm_), tape.constant(0.0)};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource&, Rng&) const override {
    check_in(x, perm_.size(), "inverse");
    return {diff::permute(x, inv_), tape.constant(0.0)};
  }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inv_;
};

/// Keeps the first `keep` coordinates. The inverse draws the dropped ones
/// from N(0, 1); their log density is the likelihood term.
class Slice : public FlowLayer {
 public:
  Slice(std::size_t dim, std::size_t keep) : dim_(dim), keep_(keep) {
    if (keep == 0 || keep >= dim) throw diff::ShapeError("slice must drop at least one and keep at least one coordinate");
  }
  std::string kind() const override { return "slice"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return keep_; }
  bool bijective() const override { return false; }

  Transformed forward(Tape&, const Var& z, ParamSource&) const override {
    check_in(z, dim_, "forward");
    return {diff::slice(z, 0, keep_), std_normal_logpdf(diff::slice(z, keep_, dim_))};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource&, Rng& rng) const override {
    check_in(x, keep_, "inverse");
    Var pad = tape.constant(diff::normal_tensor({dim_ - keep_}, rng));
    return {diff::concat({x, pad}), -std_normal_logpdf(pad)};
  }

 private:
  std::size_t dim_;
  std::size_t keep_;
};

/// x_j = |z_j| on the chosen coordinates; the inverse picks each sign with
/// probability one half.
class Abs : public FlowLayer {
 public:
  Abs(std::size_t dim, std::vector<std::size_t> coords) : dim_(dim), coords_(std::move(coords)) {
    mask_ = Tensor::zeros({dim_});
    for (auto c : coords_) {
      if (c >= dim_) throw diff::ShapeError("abs coordinate out of range");
      mask_[c] = 1.0;
    }
  }
  explicit Abs(std::size_t dim) : Abs(dim, all(dim)) {}
  std::string kind() const override { return "abs"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool bijective() const override { return false; }

  Transformed forward(Tape& tape, const Var& z, ParamSource&) const override {
    check_in(z, dim_, "forward");
    Tensor keep = Tensor(Shape{dim_}, 1.0);
    for (auto c : coords_) keep[c] = 0.0;
    Var x = z * tape.constant(keep) + diff::abs(z) * tape.constant(mask_);
    return {x, tape.constant(-std::log(2.0) * static_cast<double>(coords_.size()))};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource&, Rng& rng) const override {
    check_in(x, dim_, "inverse");
    Tensor sign(Shape{dim_}, 1.0);
    for (auto c : coords_) {
      if (x[c] < 0.0) throw diff::DomainError("abs inverse: negative input outside the image");
      sign[c] = diff::uniform01(rng) < 0.5 ? -1.0 : 1.0;
    }
    return {x * tape.constant(sign), tape.constant(std::log(2.0) * static_cast<double>(coords_.size()))};
  }

 private:
  static std::vector<std::size_t> all(std::size_t d) {
    std::vector<std::size_t> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = i;
    return v;
  }
  std::size_t dim_;
  std::vector<std::size_t> coords_;
  Tensor mask_;
};

/// Fixed elementwise affine map x = a z + c (no parameters).
class FixedAffine : public FlowLayer {
 public:
  FixedAffine(std::vector<double> scale, std::vector<double> shift) : a_(std::move(scale)), c_(std::move(shift)) {
    if (a_.size() != c_.size()) throw diff::ShapeError("fixed affine: size mismatch");
    for (double v : a_)
      if (v == 0.0) throw diff::DomainError("fixed affine: zero scale is not invertible");
  }
  std::string kind() const override { return "fixed_affine"; }
  std::size_t in_dim() const override { return a_.size(); }
  std::size_t out_dim() const override { return a_.size(); }

  Transformed forward(Tape& tape, const Var& z, ParamSource&) const override {
    check_in(z, a_.size(), "forward");
    return {z * tape.constant(Tensor::vector(a_)) + tape.constant(Tensor::vector(c_)), tape.constant(logabs())};
  }
  Transformed inverse(Tape& tape, const Var& x, ParamSource&, Rng&) const override {
    check_in(x, a_.size(), "inverse");
    std::vector<double> inv(a_.size());
    for (std::size_t i = 0; i < a_.size(); ++i) inv[i] = 1.0 / a_[i];
    return {(x - tape.constant(Tensor::vector(c_))) * tape.constant(Tensor::vector(inv)), tape.constant(-logabs())};
  }

 private:
  double logabs() const {
    double s = 0.0;
    for (double v : a_) s += std::log(std::abs(v));
    return s;
  }
  std::vector<double> a_;
  std::vector<double> c_;
};

}  // namespace ben::flows
