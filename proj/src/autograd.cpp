#include "tcb/autograd.hpp"

#include "tcb/bytes.hpp"
#include "tcb/error.hpp"

namespace tcb {

Param& ParamStore::add(const std::string& name, Tensor value, std::string init) {
  if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
  Param p;
  p.grad = Tensor::like(value);
  p.value = std::move(value);
  p.init = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) p.trainable = trainable;
}

bool ParamStore::all_finite() const {
  for (const auto& [name, p] : params_)
    if (!p.value.all_finite()) return false;
  return true;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = fnv1a64(std::string_view{});
  for (const auto& [name, p] : params_) {
    h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()), h);
    h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(p.value.dims().data()), sizeof(int) * 4), h);
    h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(p.value.data()), p.value.size() * sizeof(double)), h);
  }
  return h;
}

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::param(Param& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.graph != this) throw ConfigError("variable from another graph");
    n.requires_grad = n.requires_grad || nodes_.at(v.id).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Graph::grad(Var v) { return grad_buffer(v); }

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::like(n.value);
  return n.grad;
}

void Graph::add_grad(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (n.grad.empty())
    n.grad = g;
  else
    n.grad += g;
}

void Graph::backward(Var root) {
  Node& r = nodes_.at(root.id);
  if (r.value.size() != 1) throw ConfigError("backward needs a scalar root");
  if (!r.requires_grad) return;
  r.grad = Tensor::like(r.value, 1.0);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.value, n.grad);
    if (n.param && n.param->trainable) n.param->grad += n.grad;
  }
}

}  // namespace tcb
