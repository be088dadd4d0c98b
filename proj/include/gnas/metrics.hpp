#pragma once

#include <functional>
#include <string>

#include "gnas/bench.hpp"
#include "gnas/supernet.hpp"

namespace gnas {

struct DomainMetrics {
  std::string domain;
  double accuracy = 0.0;
  double reg_mse = 0.0;
  double detection_score = 0.0;  // correct class AND ||yhat2 - y2||_inf < tau
  int n = 0;
};

/// Raw model outputs for a whole split (batched internally).
struct SplitPredictions {
  std::vector<double> y1;  // logits
  Tensor y2;               // [N,2]
  Tensor features;         // [N,F]
};

using ForwardFn = std::function<Prediction(Tape&, const Tensor&)>;

ForwardFn make_forward(const DiscreteModel& model);
/// Supernet with its current softmax alphas (no gradient).
ForwardFn make_forward(const SupernetModel& model);

SplitPredictions predict_split(const ForwardFn& fwd, const Split& split, int batch = 64);

/// Single deterministic pass; sign of yhat1 is the predicted class, a logit of
/// exactly 0 counts as wrong.
DomainMetrics evaluate_domain(const ForwardFn& fwd, const Split& split, const std::string& name,
                              double tau = 0.15, int batch = 64);

constexpr double kDetectionTau = 0.15;

}  // namespace gnas
