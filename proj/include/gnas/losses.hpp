#pragma once

#include "gnas/supernet.hpp"
#include "gnas/tape.hpp"

namespace gnas {

struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double g = 0.0;
  double total = 0.0;
  double lambda_g = 0.0;
};

struct LossNodes {
  VarId cls;
  VarId reg;
  VarId g;
  VarId total;
};

/// total = cls + reg + lambda_g * g. All terms mean-reduced over the batch;
/// the regression term sums over components before averaging.
LossNodes train_loss(Tape& tape, const Prediction& pred, const std::vector<double>& y1,
                     const Tensor& y2, double lambda_g);

LossBreakdown read_breakdown(const Tape& tape, const LossNodes& nodes, double lambda_g);

/// Residual components outside the smooth-L1 quadratic regime [-1,1].
int count_regime_violations(const Tensor& yhat2, const Tensor& y2);

}  // namespace gnas
