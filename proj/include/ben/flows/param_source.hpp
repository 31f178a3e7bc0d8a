#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ben/diffmath.hpp"

namespace ben::flows {

using diff::ParamStore;
using diff::Rng;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Where a layer's parameters come from. Layers request them in a fixed
/// order, which slice-backed sources rely on.
class ParamSource {
 public:
  virtual ~ParamSource() = default;
  virtual Var get(Tape& tape, const std::string& name, const Shape& shape) = 0;
};

/// Named entries "<prefix><name>" of a store. frozen binds them as constants.
class StoreSource : public ParamSource {
 public:
  StoreSource(ParamStore& store, std::string prefix, bool frozen = false)
      : store_(&store), prefix_(std::move(prefix)), frozen_(frozen) {}

  Var get(Tape& tape, const std::string& name, const Shape& shape) override {
    const std::string key = prefix_ + name;
    const Tensor& v = store_->value(key);
    if (v.shape() != shape)
      throw diff::ShapeError("parameter " + key + " has shape " + diff::shape_str(v.shape()) + ", layer wants " +
                             diff::shape_str(shape));
    return frozen_ ? tape.constant(v) : tape.param(*store_, key);
  }

 private:
  ParamStore* store_;
  std::string prefix_;
  bool frozen_;
};

/// Consecutive slices of one coupling vector (e.g. a conditioner output).
/// Entries past the layer's demand are simply never read.
class SliceSource : public ParamSource {
 public:
  explicit SliceSource(Var coupling) : coupling_(coupling) {}

  Var get(Tape&, const std::string& name, const Shape& shape) override {
    const std::size_t n = diff::shape_size(shape);
    if (offset_ + n > coupling_.size())
      throw diff::ShapeError("coupling vector too short for parameter " + name + " (needs " +
                             std::to_string(offset_ + n) + ", has " + std::to_string(coupling_.size()) + ")");
    Var v = diff::slice(coupling_, offset_, offset_ + n);
    offset_ += n;
    return shape.size() == 1 ? v : diff::reshape(v, shape);
  }

  std::size_t consumed() const { return offset_; }

 private:
  Var coupling_;
  std::size_t offset_ = 0;
};

/// Hands each layer of a stack its own source.
class ParamProvider {
 public:
  virtual ~ParamProvider() = default;
  virtual ParamSource& layer(std::size_t index) = 0;
};

class StoreProvider : public ParamProvider {
 public:
  StoreProvider(ParamStore& store, std::string prefix, bool frozen = false)
      : store_(&store), prefix_(std::move(prefix)), frozen_(frozen) {}

  ParamSource& layer(std::size_t index) override {
    while (sources_.size() <= index)
      sources_.push_back(std::make_unique<StoreSource>(*store_, layer_prefix(prefix_, sources_.size()), frozen_));
    return *sources_[index];
  }

  static std::string layer_prefix(const std::string& prefix, std::size_t i) {
    return prefix + "l" + std::to_string(i) + "/";
  }

 private:
  ParamStore* store_;
  std::string prefix_;
  bool frozen_;
  std::vector<std::unique_ptr<StoreSource>> sources_;
};

/// One coupling vector per layer; layers without parameters may get an
/// unbound Var.
class CouplingProvider : public ParamProvider {
 public:
  explicit CouplingProvider(std::vector<Var> per_layer) {
    for (auto& v : per_layer) sources_.push_back(std::make_unique<SliceSource>(v));
  }

  ParamSource& layer(std::size_t index) override {
    if (index >= sources_.size()) throw diff::ShapeError("no coupling vector for layer " + std::to_string(index));
    return *sources_[index];
  }

 private:
  std::vector<std::unique_ptr<SliceSource>> sources_;
};

}  // namespace ben::flows
