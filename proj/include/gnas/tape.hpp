#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gnas/tensor.hpp"

namespace gnas {

using VarId = int;

enum class PoolKind { Avg, Max };

/// Reverse-mode tape. Each recorded primitive stores its output tensor and a
/// backward closure over the saved forward context; the recording order is a
/// valid topological order of the DAG.
class Tape {
 public:
  /// Registers an input node. Trainability comes from t.requires_grad.
  VarId leaf(Tensor t);
  /// Registers a non-trainable input.
  VarId constant(Tensor t);

  const Tensor& val(VarId id) const { return nodes_[check(id)].t; }
  Tensor& node(VarId id) { return nodes_[check(id)].t; }
  size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. `loss` must be
  /// scalar. Afterwards every reachable differentiable node carries its grad;
  /// unreachable nodes keep an empty grad slot.
  void backward(VarId loss);

  // ---- primitives ----
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);
  VarId scale(VarId a, double c);
  VarId add_many(const std::vector<VarId>& xs);
  /// sum_k w[k] * xs[k]; w is a 1-D tensor of length xs.size().
  VarId weighted_sum(const std::vector<VarId>& xs, VarId w);
  VarId relu(VarId x);
  VarId sum(VarId x);
  VarId mean(VarId x);
  VarId reshape(VarId x, std::vector<int> shape);  // same element count

  /// Cross-correlation on [N,Cin,H,W]. groups=1 takes w=[Cout,Cin,k,k];
  /// groups=Cin is depthwise with w=[C,1,k,k]. Symmetric zero padding keeps
  /// spatial dims at stride 1 and yields ceil(H/2) at stride 2. Kernel odd.
  VarId conv2d(VarId x, VarId w, int stride, int dilation, int groups);

  /// window 3 => padding 1; window 2 => no padding (2x2 subsample).
  /// Avg excludes padding from the divisor; max routes the gradient to the
  /// first maximal element in row-major window order.
  VarId pool2d(VarId x, PoolKind kind, int window, int stride);

  VarId concat_channels(const std::vector<VarId>& xs);
  VarId global_avg_pool(VarId x);                  // [N,C,H,W] -> [N,C]
  VarId linear(VarId x, VarId w, VarId b);         // [N,F],[O,F],[O] -> [N,O]
  VarId softmax(VarId logits);                     // 1-D

  // ---- loss heads (targets are constants) ----
  /// mean_i log(1+exp(-y1[i]*yhat[i])), labels strictly in {-1,+1}.
  VarId logistic_loss(VarId yhat1, const std::vector<double>& y1);
  /// Huber at unit transition, summed over components, averaged over batch.
  VarId smooth_l1_loss(VarId yhat2, const Tensor& y2);
  /// 0.5*mean(yhat1^2) - 0.5*mean(|yhat2 row|^2).
  VarId g_loss(VarId yhat1, VarId yhat2);

 private:
  struct Node {
    Tensor t;
    std::function<void(Tape&)> back;  // empty for leaves/constants
  };
  std::vector<Node> nodes_;

  VarId check(VarId id) const {
    GNAS_CHECK(id >= 0 && id < static_cast<VarId>(nodes_.size()), "bad VarId");
    return id;
  }
  VarId push(Tensor t, std::function<void(Tape&)> back, bool rg);
  bool rg(VarId id) const { return nodes_[id].t.requires_grad; }
  std::vector<double>& g(VarId id) {
    nodes_[id].t.ensure_grad();
    return nodes_[id].t.grad;
  }
};

/// name -> gradient of `loss` w.r.t. the named leaf; zero tensor when the
/// leaf does not reach the loss.
using GradMap = std::map<std::string, Tensor>;

GradMap forward_backward(Tape& tape, VarId loss,
                         const std::vector<std::pair<std::string, VarId>>& params);

}  // namespace gnas
