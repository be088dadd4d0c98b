#include "gnas/params.hpp"

#include "gnas/kernels.hpp"

namespace gnas {

Tensor& ParamStore::add(std::string name, Group group, Tensor value) {
  GNAS_CHECK(index_.count(name) == 0, "duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), group, std::move(value)});
  return entries_.back().value;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  GNAS_CHECK(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second].value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  GNAS_CHECK(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second].value;
}

VarId ParamBinding::at(const std::string& name) const {
  auto it = ids.find(name);
  GNAS_CHECK(it != ids.end(), "parameter not bound: " + name);
  return it->second;
}

ParamBinding bind_params(Tape& tape, const ParamStore& store, const std::set<Group>& trainable) {
  ParamBinding b;
  for (const auto& e : store.entries()) {
    Tensor t = e.value;
    t.requires_grad = trainable.count(e.group) != 0;
    t.grad.clear();
    b.ids.emplace(e.name, tape.leaf(std::move(t)));
  }
  return b;
}

void sgd_step(ParamStore& store, const GradMap& grads, double lr, const std::set<Group>& updatable) {
  GNAS_CHECK(lr > 0.0, "sgd_step: lr must be positive");
  for (auto& e : store.entries()) {
    if (!updatable.count(e.group)) continue;
    auto it = grads.find(e.name);
    GNAS_CHECK(it != grads.end(), "sgd_step: missing gradient for " + e.name);
    GNAS_CHECK(it->second.shape == e.value.shape, "sgd_step: gradient shape mismatch for " + e.name);
    kern::active().axpy(e.value.data(), -lr, it->second.data(), e.value.v.size());
  }
}

}  // namespace gnas
