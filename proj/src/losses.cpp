#include "gnas/losses.hpp"

#include <cmath>

namespace gnas {

LossNodes train_loss(Tape& tape, const Prediction& pred, const std::vector<double>& y1,
                     const Tensor& y2, double lambda_g) {
  GNAS_CHECK(lambda_g >= 0.0, "train_loss: lambda_g must be non-negative");
  LossNodes n{};
  n.cls = tape.logistic_loss(pred.y1, y1);
  n.reg = tape.smooth_l1_loss(pred.y2, y2);
  n.g = tape.g_loss(pred.y1, pred.y2);
  VarId base = tape.add(n.cls, n.reg);
  n.total = lambda_g == 0.0 ? base : tape.add(base, tape.scale(n.g, lambda_g));
  return n;
}

LossBreakdown read_breakdown(const Tape& tape, const LossNodes& nodes, double lambda_g) {
  LossBreakdown b;
  b.cls = tape.val(nodes.cls).v[0];
  b.reg = tape.val(nodes.reg).v[0];
  b.g = tape.val(nodes.g).v[0];
  b.total = tape.val(nodes.total).v[0];
  b.lambda_g = lambda_g;
  return b;
}

int count_regime_violations(const Tensor& yhat2, const Tensor& y2) {
  GNAS_CHECK(yhat2.shape == y2.shape, "count_regime_violations: shape mismatch");
  int n = 0;
  for (size_t i = 0; i < yhat2.v.size(); ++i)
    if (std::fabs(yhat2.v[i] - y2.v[i]) >= 1.0) ++n;
  return n;
}

}  // namespace gnas
