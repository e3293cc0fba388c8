#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dejavu/ad/tensor.h"

namespace dejavu::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Named trainable tensors plus their gradient buffers. Iteration is by name.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
  };

  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  void zero_grad();

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
};

// Gradient accumulators keyed like a ParamStore; used when several tapes run
// concurrently and their contributions are reduced afterwards in a fixed order.
using GradientMap = std::map<std::string, Tensor>;

GradientMap zero_gradients_like(const ParamStore& store);
void accumulate(GradientMap& into, const GradientMap& from);
void add_to_store_grads(ParamStore& store, const GradientMap& grads, double scale = 1.0);

// Reverse-mode recording of tensor operations. Each node keeps its forward
// value, a lazily allocated adjoint, and a closure that pushes the adjoint to
// its parents. Nodes are appended in topological order, so backward() is a
// reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value);
  // Leaf whose adjoint is added into *sink when backward() finishes.
  Var leaf(Tensor value, Tensor* sink);
  // Records an op result. `requires_grad` should be true iff any parent does.
  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  // Adjoint of a node, allocated as zeros on first access.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id); }

  // Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Tensor* sink = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool recording_;
};

// Resolves parameter names to leaves on one tape, caching so every parameter
// appears once. Gradients go to `sink` (or nowhere when it is null).
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParamStore& store, GradientMap* sink)
      : tape_(tape), store_(store), sink_(sink) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  GradientMap* sink_;
  std::map<std::string, Var> bound_;
};

}  // namespace dejavu::ad
