#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gnas/params.hpp"
#include "gnas/tape.hpp"

namespace gnas {

/// The seven candidate operations, in fixed index order.
enum class OpKind : int {
  SepConv3 = 0,
  SepConv5,
  DilConv3,
  DilConv5,
  AvgPool3,
  MaxPool3,
  SkipConnect,
};

inline constexpr int kNumOps = 7;

std::string_view op_name(OpKind k);
std::optional<OpKind> op_from_name(std::string_view name);

/// One candidate operation on an edge. Conv variants own their weights via
/// names registered in a ParamStore; pools and skip are parameter-free.
/// SepConv/DilConv = ReLU -> depthwise kxk -> pointwise 1x1 (dilation 2 for
/// the Dil variants); SkipConnect at stride 2 is a 2x2 average subsample.
struct Operation {
  OpKind kind;
  int channels = 0;
  int stride = 1;
  std::string dw_name;  // depthwise weights, empty if parameter-free
  std::string pw_name;  // pointwise weights

  VarId forward(Tape& tape, VarId x, const ParamBinding& bind) const;
};

/// Registers the operation's parameters (uniform init in [-1/sqrt(fan_in),
/// 1/sqrt(fan_in)]) under `prefix` and returns the operation.
Operation build_operation(OpKind kind, int channels, int stride, const std::string& prefix,
                          ParamStore& store, Rng& rng);

enum class CellKind { Normal, Reduction };

/// Cell DAG: nodes 0,1 are the two inputs; intermediates are 2..p+1. One edge
/// from every earlier node to each intermediate. Reduction cells stride-2 the
/// edges leaving input nodes.
struct CellSpec {
  CellKind kind = CellKind::Normal;
  int p = 4;
  int channels = 8;

  struct Edge {
    int from;
    int to;  // intermediate node index (>= 2)
    int stride;
  };
  std::vector<Edge> edges;

  static CellSpec make(CellKind kind, int p, int channels);
  int edge_count() const { return static_cast<int>(edges.size()); }
  int edge_index(int from, int to) const;
};

/// sum_k alpha[k] * op_k(x); alpha is a 1-D tensor of length 7 on the tape.
VarId mixed_op_forward(Tape& tape, const std::array<Operation, kNumOps>& edge_ops, VarId alpha,
                       VarId input, const ParamBinding& bind);

/// Eq-style cell forward under continuous relaxation: each intermediate node
/// sums its incoming mixed-edge outputs; the cell output concatenates the p
/// intermediate nodes (p*C channels). `alphas` has one 7-vector per edge in
/// spec order. `edge_scale`, when given, multiplies each edge's contribution
/// (used for the one-hot/discretization equivalence check).
VarId cell_forward(Tape& tape, const CellSpec& spec,
                   const std::vector<std::array<Operation, kNumOps>>& edge_ops,
                   const std::array<VarId, 2>& inputs, const std::vector<VarId>& alphas,
                   const ParamBinding& bind, const std::vector<double>* edge_scale = nullptr);

}  // namespace gnas
