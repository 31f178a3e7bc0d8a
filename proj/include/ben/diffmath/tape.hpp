#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ben/diffmath/param_store.hpp"
#include "ben/diffmath/tensor.hpp"

namespace ben::diff {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  inline const Tensor& value() const;
  inline const Shape& shape() const;
  inline std::size_t size() const;
  inline double item() const;
  inline double operator[](std::size_t i) const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so a
/// reverse sweep over ids is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor&)>;

  explicit Tape(bool recording = true) : recording_(recording) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  /// Input that gradients are tracked for (tests and finite-difference checks).
  Var leaf(Tensor value) { return push(std::move(value), recording_, nullptr); }

  /// Binds a stored parameter. Repeated binds on one tape share a node.
  Var param(ParamStore& store, const std::string& name) {
    auto key = std::make_pair(&store, name);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(store.value(name), recording_, nullptr);
    nodes_[v.id()].grad_slot = &store.grad(name);
    param_nodes_.emplace(std::move(key), v.id());
    return v;
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Appends a computed node. `backward` receives the node's output gradient
  /// and must accumulate into its parents.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    if (recording_)
      for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }
  Var record(Tensor value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    if (recording_)
      for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  void accumulate(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad.assign(n.value.size(), 0.0);
      n.has_grad = true;
    }
    auto& dst = n.grad;
    const auto& src = g.values();
    if (src.size() != dst.size()) throw ShapeError("gradient size mismatch on accumulate");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Reverse sweep from a scalar root; parameter gradients are added into
  /// their ParamStores.
  void backward(Var root) {
    if (root.size() != 1) throw ShapeError("backward root must be scalar, got " + shape_str(root.shape()));
    if (!recording_) throw std::logic_error("backward on a non-recording tape");
    for (auto& n : nodes_) n.has_grad = false;
    accumulate(root.id(), Tensor(root.shape(), 1.0));
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.has_grad) continue;
      if (n.backward) {
        scratch_ = Tensor(n.value.shape(), std::move(n.grad));
        n.backward(*this, scratch_);
        n.grad = std::move(scratch_.values());
      }
    }
    for (auto& n : nodes_) {
      if (n.grad_slot && n.has_grad) {
        auto& dst = n.grad_slot->values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      }
    }
  }

  /// Gradient of the last backward pass w.r.t. a node (zeros if unreached).
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (!n.has_grad) return Tensor(n.value.shape(), 0.0);
    return Tensor(n.value.shape(), n.grad);
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    Tensor* grad_slot = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Tensor value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool recording_;
  std::vector<Node> nodes_;
  Tensor scratch_;
  std::map<std::pair<ParamStore*, std::string>, int> param_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Shape& Var::shape() const { return value().shape(); }
inline std::size_t Var::size() const { return value().size(); }
inline double Var::item() const { return value().item(); }
inline double Var::operator[](std::size_t i) const { return value()[i]; }

}  // namespace ben::diff
