#include "dejavu/ad/tape.h"

#include <fmt/format.h>

#include "dejavu/error.h"

namespace dejavu::ad {

const Tensor& Var::value() const { return tape->value(*this); }

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name) > 0) {
    throw Error(fmt::format("duplicate parameter '{}'", name));
  }
  Tensor grad(init.shape());
  auto& e = entries_[name];
  e.value = std::move(init);
  e.grad = std::move(grad);
  return e.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second.grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second.grad;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

GradientMap zero_gradients_like(const ParamStore& store) {
  GradientMap out;
  for (const auto& [name, e] : store.entries()) out.emplace(name, Tensor(e.value.shape()));
  return out;
}

void accumulate(GradientMap& into, const GradientMap& from) {
  for (const auto& [name, g] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, g);
    } else {
      it->second += g;
    }
  }
}

void add_to_store_grads(ParamStore& store, const GradientMap& grads, double scale) {
  for (const auto& [name, g] : grads) {
    Tensor& dst = store.grad(name);
    auto d = dst.data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  }
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, Tensor* sink) {
  const bool rg = recording_ && sink != nullptr;
  nodes_.push_back(Node{std::move(value), {}, {}, rg ? sink : nullptr, rg});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  const bool rg = recording_ && requires_grad;
  nodes_.push_back(Node{std::move(value), {}, rg ? std::move(backward) : Backward{},
                        nullptr, rg});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (!recording_) throw Error("backward() on a tape that does not record gradients");
  if (nodes_[root.id].value.size() != 1) {
    throw ShapeError(fmt::format("backward() root must be scalar, got {}",
                                 shape_string(nodes_[root.id].value.shape())));
  }
  grad(root.id)[0] = 1.0;
  for (std::uint32_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.sink != nullptr) *n.sink += n.grad;
  }
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Tensor* sink = nullptr;
  if (sink_ != nullptr) {
    auto s = sink_->find(name);
    if (s == sink_->end()) throw Error(fmt::format("no gradient slot for '{}'", name));
    sink = &s->second;
  }
  Var v = tape_.leaf(store_.value(name), sink);
  bound_.emplace(name, v);
  return v;
}

}  // namespace dejavu::ad
