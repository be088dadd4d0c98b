#pragma once

#include <array>
#include <string>
#include <vector>

#include "gnas/search_space.hpp"

namespace gnas {

struct NetConfig {
  int channels = 8;  // C
  int p = 4;         // intermediate nodes per cell
};

struct Prediction {
  VarId y1;        // [N] classification logit
  VarId y2;        // [N,2] position regression
  VarId features;  // [N, p*C] pooled penultimate vector
};

/// Discrete architecture: per intermediate node, the two retained incoming
/// edges with their chosen operations.
struct Genotype {
  struct EdgeChoice {
    int from;
    OpKind op;
    bool operator==(const EdgeChoice&) const = default;
  };
  struct NodeChoice {
    int node;  // intermediate index 0..p-1
    std::vector<EdgeChoice> edges;
    bool operator==(const NodeChoice&) const = default;
  };
  int p = 4;
  std::vector<NodeChoice> normal;
  std::vector<NodeChoice> reduction;

  bool operator==(const Genotype&) const = default;
};

/// argmax op per edge, then top-2 incoming edges per node ranked by the
/// edge's maximal alpha; ties break to the lower op index, then the lower
/// source index. Alphas are indexed like CellSpec::edges.
Genotype discretize_alphas(const CellSpec& normal_spec, const std::vector<Tensor>& normal_alphas,
                           const CellSpec& reduction_spec,
                           const std::vector<Tensor>& reduction_alphas);

void validate_genotype(const Genotype& g);  // throws ContractViolation

std::string genotype_to_text(const Genotype& g);
Genotype genotype_from_text(const std::string& text);  // throws ParseError

/// Search-stage model: backbone -> stem -> mixed normal cell -> projection ->
/// mixed reduction cell -> pooled heads. Architecture logits live in the
/// param store's Arch group ("arch.normal.eNN" etc., one 7-vector per edge).
class SupernetModel {
 public:
  SupernetModel(NetConfig cfg, uint64_t seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const NetConfig& config() const { return cfg_; }
  const CellSpec& normal_spec() const { return normal_spec_; }
  const CellSpec& reduction_spec() const { return reduction_spec_; }

  /// `alpha_override`, when given, replaces softmax(delta) per edge (normal
  /// edges first, then reduction); `edge_mask` zeroes edges out of the node
  /// sums. Input batch is [N,3,H,W] with values in [0,1].
  Prediction forward(Tape& tape, const Tensor& x, const ParamBinding& bind,
                     const std::vector<Tensor>* alpha_override = nullptr,
                     const std::vector<double>* edge_mask = nullptr) const;

  /// softmax(delta) per edge, normal cell first.
  std::vector<Tensor> alphas() const;
  Genotype discretize() const;

  /// One-hot alphas plus the retained-edge mask matching `g` (for the
  /// reconstruction equivalence contract).
  std::pair<std::vector<Tensor>, std::vector<double>> onehot_for(const Genotype& g) const;

 private:
  NetConfig cfg_;
  CellSpec normal_spec_, reduction_spec_;
  std::vector<std::array<Operation, kNumOps>> normal_ops_, reduction_ops_;
  ParamStore params_;
};

/// Augment-stage model containing only the retained operations.
class DiscreteModel {
 public:
  DiscreteModel(Genotype g, NetConfig cfg, uint64_t seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Genotype& genotype() const { return geno_; }
  const NetConfig& config() const { return cfg_; }

  Prediction forward(Tape& tape, const Tensor& x, const ParamBinding& bind) const;

 private:
  struct DiscreteEdge {
    int from;
    Operation op;
  };
  NetConfig cfg_;
  Genotype geno_;
  std::vector<std::vector<DiscreteEdge>> normal_nodes_, reduction_nodes_;
  ParamStore params_;
};

DiscreteModel reconstruct(const Genotype& g, NetConfig cfg, uint64_t seed);

/// Copies every parameter of `dst` from the identically named entry in `src`.
void copy_shared_params(const ParamStore& src, ParamStore& dst);

// parameter checkpoint (binary, little-endian)
void save_params(const ParamStore& store, const std::string& path);
void load_params(ParamStore& store, const std::string& path);  // shapes must match
std::string params_hash(const ParamStore& store);

}  // namespace gnas
