#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnas/tape.hpp"
#include "gnas/tensor.hpp"

namespace gnas {

/// Trainable-parameter groups: backbone weights, prediction-head weights, and
/// architecture logits.
enum class Group { Backbone, Head, Arch };

class ParamStore {
 public:
  struct Entry {
    std::string name;
    Group group;
    Tensor value;
  };

  Tensor& add(std::string name, Group group, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/// Per-step association of parameter names with tape leaves.
struct ParamBinding {
  std::unordered_map<std::string, VarId> ids;
  VarId at(const std::string& name) const;
};

/// Registers every parameter as a tape leaf. Parameters whose group is in
/// `trainable` are flagged requires_grad.
ParamBinding bind_params(Tape& tape, const ParamStore& store, const std::set<Group>& trainable);

/// p <- p - lr * g for every parameter whose group is in `updatable`.
/// Missing gradient for an updatable parameter is a contract violation.
void sgd_step(ParamStore& store, const GradMap& grads, double lr, const std::set<Group>& updatable);

}  // namespace gnas
