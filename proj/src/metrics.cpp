#include "gnas/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace gnas {

ForwardFn make_forward(const DiscreteModel& model) {
  return [&model](Tape& tape, const Tensor& x) {
    const ParamBinding bind = bind_params(tape, model.params(), {});
    return model.forward(tape, x, bind);
  };
}

ForwardFn make_forward(const SupernetModel& model) {
  return [&model](Tape& tape, const Tensor& x) {
    const ParamBinding bind = bind_params(tape, model.params(), {});
    return model.forward(tape, x, bind);
  };
}

SplitPredictions predict_split(const ForwardFn& fwd, const Split& split, int batch) {
  GNAS_CHECK(split.size() >= 1, "predict_split: empty split");
  GNAS_CHECK(batch >= 1, "predict_split: bad batch size");
  const int n = split.size();
  SplitPredictions out;
  out.y1.resize(n);
  out.y2 = Tensor::zeros({n, 2});
  int feat_dim = -1;
  for (int start = 0; start < n; start += batch) {
    const int take = std::min(batch, n - start);
    std::vector<int> idx(take);
    for (int i = 0; i < take; ++i) idx[i] = start + i;
    Tensor images, y2;
    std::vector<double> y1;
    split.gather(idx, images, y1, y2);

    Tape tape;
    const Prediction pred = fwd(tape, images);
    const Tensor& py1 = tape.val(pred.y1);
    const Tensor& py2 = tape.val(pred.y2);
    const Tensor& pf = tape.val(pred.features);
    if (feat_dim < 0) {
      feat_dim = pf.shape[1];
      out.features = Tensor::zeros({n, feat_dim});
    }
    std::copy_n(py1.v.data(), take, out.y1.data() + start);
    std::copy_n(py2.v.data(), 2 * take, out.y2.v.data() + 2 * start);
    std::copy_n(pf.v.data(), static_cast<size_t>(take) * feat_dim,
                out.features.v.data() + static_cast<size_t>(start) * feat_dim);
  }
  return out;
}

DomainMetrics evaluate_domain(const ForwardFn& fwd, const Split& split, const std::string& name,
                              double tau, int batch) {
  GNAS_CHECK(tau > 0.0, "evaluate_domain: tau must be positive");
  const SplitPredictions pred = predict_split(fwd, split, batch);
  const int n = split.size();
  DomainMetrics m;
  m.domain = name;
  m.n = n;
  int correct = 0, detected = 0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool cls_ok = pred.y1[i] * split.y1[i] > 0.0;
    double linf = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double d = pred.y2.v[2 * i + k] - split.y2.v[2 * i + k];
      sq += d * d;
      linf = std::max(linf, std::fabs(d));
    }
    correct += cls_ok ? 1 : 0;
    detected += (cls_ok && linf < tau) ? 1 : 0;
  }
  m.accuracy = static_cast<double>(correct) / n;
  m.detection_score = static_cast<double>(detected) / n;
  m.reg_mse = sq / (2.0 * n);
  return m;
}

}  // namespace gnas
