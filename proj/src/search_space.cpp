#include "gnas/search_space.hpp"

#include <cmath>

namespace gnas {

namespace {

constexpr std::string_view kOpNames[kNumOps] = {
    "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5",
    "avg_pool_3x3", "max_pool_3x3", "skip_connect",
};

int kernel_size(OpKind k) {
  switch (k) {
    case OpKind::SepConv3:
    case OpKind::DilConv3:
      return 3;
    case OpKind::SepConv5:
    case OpKind::DilConv5:
      return 5;
    default:
      return 0;
  }
}

int dilation(OpKind k) {
  return (k == OpKind::DilConv3 || k == OpKind::DilConv5) ? 2 : 1;
}

}  // namespace

std::string_view op_name(OpKind k) { return kOpNames[static_cast<int>(k)]; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (int i = 0; i < kNumOps; ++i)
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  return std::nullopt;
}

Operation build_operation(OpKind kind, int channels, int stride, const std::string& prefix,
                          ParamStore& store, Rng& rng) {
  GNAS_CHECK(channels >= 1, "build_operation: channels must be >= 1");
  GNAS_CHECK(stride == 1 || stride == 2, "build_operation: stride must be 1 or 2");
  Operation op{kind, channels, stride, {}, {}};
  const int k = kernel_size(kind);
  if (k > 0) {
    op.dw_name = prefix + ".dw";
    op.pw_name = prefix + ".pw";
    const double sd = 1.0 / std::sqrt(static_cast<double>(k * k));
    store.add(op.dw_name, Group::Head, Tensor::uniform({channels, 1, k, k}, -sd, sd, rng));
    const double sp = 1.0 / std::sqrt(static_cast<double>(channels));
    store.add(op.pw_name, Group::Head, Tensor::uniform({channels, channels, 1, 1}, -sp, sp, rng));
  }
  return op;
}

VarId Operation::forward(Tape& tape, VarId x, const ParamBinding& bind) const {
  switch (kind) {
    case OpKind::SepConv3:
    case OpKind::SepConv5:
    case OpKind::DilConv3:
    case OpKind::DilConv5: {
      VarId h = tape.relu(x);
      h = tape.conv2d(h, bind.at(dw_name), stride, dilation(kind), channels);
      return tape.conv2d(h, bind.at(pw_name), 1, 1, 1);
    }
    case OpKind::AvgPool3:
      return tape.pool2d(x, PoolKind::Avg, 3, stride);
    case OpKind::MaxPool3:
      return tape.pool2d(x, PoolKind::Max, 3, stride);
    case OpKind::SkipConnect:
      return stride == 1 ? x : tape.pool2d(x, PoolKind::Avg, 2, 2);
  }
  throw ContractViolation("Operation::forward: bad kind");
}

CellSpec CellSpec::make(CellKind kind, int p, int channels) {
  GNAS_CHECK(p >= 1 && p <= 8, "CellSpec: node count out of range");
  CellSpec s;
  s.kind = kind;
  s.p = p;
  s.channels = channels;
  for (int j = 0; j < p; ++j) {
    const int to = 2 + j;
    for (int from = 0; from < to; ++from) {
      const int stride = (kind == CellKind::Reduction && from < 2) ? 2 : 1;
      s.edges.push_back({from, to, stride});
    }
  }
  return s;
}

int CellSpec::edge_index(int from, int to) const {
  for (int i = 0; i < static_cast<int>(edges.size()); ++i)
    if (edges[i].from == from && edges[i].to == to) return i;
  throw ContractViolation("CellSpec::edge_index: no such edge");
}

VarId mixed_op_forward(Tape& tape, const std::array<Operation, kNumOps>& edge_ops, VarId alpha,
                       VarId input, const ParamBinding& bind) {
  GNAS_CHECK(tape.val(alpha).shape == std::vector<int>{kNumOps},
             "mixed_op_forward: alpha must have length 7");
  std::vector<VarId> outs;
  outs.reserve(kNumOps);
  for (const Operation& op : edge_ops) outs.push_back(op.forward(tape, input, bind));
  return tape.weighted_sum(outs, alpha);
}

VarId cell_forward(Tape& tape, const CellSpec& spec,
                   const std::vector<std::array<Operation, kNumOps>>& edge_ops,
                   const std::array<VarId, 2>& inputs, const std::vector<VarId>& alphas,
                   const ParamBinding& bind, const std::vector<double>* edge_scale) {
  GNAS_CHECK(edge_ops.size() == spec.edges.size() && alphas.size() == spec.edges.size(),
             "cell_forward: per-edge data must match the edge list");
  std::vector<VarId> nodes{inputs[0], inputs[1]};
  std::vector<VarId> intermediates;
  for (int j = 0; j < spec.p; ++j) {
    const int to = 2 + j;
    std::vector<VarId> incoming;
    for (int e = 0; e < spec.edge_count(); ++e) {
      if (spec.edges[e].to != to) continue;
      if (edge_scale && (*edge_scale)[e] == 0.0) continue;
      VarId m = mixed_op_forward(tape, edge_ops[e], alphas[e], nodes[spec.edges[e].from], bind);
      if (edge_scale && (*edge_scale)[e] != 1.0) m = tape.scale(m, (*edge_scale)[e]);
      incoming.push_back(m);
    }
    GNAS_CHECK(!incoming.empty(), "cell_forward: node with no active incoming edges");
    VarId node = tape.add_many(incoming);
    nodes.push_back(node);
    intermediates.push_back(node);
  }
  return tape.concat_channels(intermediates);
}

}  // namespace gnas
