#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gnas/metrics.hpp"
#include "gnas/util.hpp"
#include "gnas/report.hpp"
#include "gnas/trainer.hpp"

using namespace gnas;

namespace {

// Fake model: the logit is pixel (0,0,0), yhat2 is pixels (0,0,1)/(0,0,2),
// features are the first two logit-adjacent pixels. Lets a test encode exact
// predictions inside the "images".
ForwardFn pixel_forward() {
  return [](Tape& tape, const Tensor& x) -> Prediction {
    const int n = x.shape[0];
    const int hw = x.shape[2] * x.shape[3];
    Tensor y1 = Tensor::zeros({n});
    Tensor y2 = Tensor::zeros({n, 2});
    Tensor feat = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
      const double* px = x.v.data() + static_cast<size_t>(i) * 3 * hw;
      y1.v[i] = px[0];
      y2.v[2 * i] = px[1];
      y2.v[2 * i + 1] = px[2];
      feat.v[2 * i] = px[1];
      feat.v[2 * i + 1] = px[2];
    }
    return Prediction{tape.constant(y1), tape.constant(y2), tape.constant(feat)};
  };
}

Split hand_split() {
  // logit, yhat2, true y1, true y2 per example; residuals chosen by hand
  Split s;
  s.images = Tensor::zeros({4, 3, 8, 8});
  s.y1 = {1.0, -1.0, -1.0, -1.0};
  s.y2 = Tensor::zeros({4, 2});
  const double logits[4] = {2.0, 0.0, -1.0, 1.0};
  const double yhat2[4][2] = {{0.1, 0.2}, {0.0, 0.0}, {0.5, -0.5}, {0.0, 0.0}};
  const double truth[4][2] = {{0.1, 0.2}, {-0.1, 0.1}, {0.3, -0.5}, {-0.3, -0.4}};
  const int hw = 64;
  for (int i = 0; i < 4; ++i) {
    double* px = s.images.v.data() + static_cast<size_t>(i) * 3 * hw;
    px[0] = logits[i];
    px[1] = yhat2[i][0];
    px[2] = yhat2[i][1];
    s.y2.v[2 * i] = truth[i][0];
    s.y2.v[2 * i + 1] = truth[i][1];
  }
  return s;
}

}  // namespace

TEST_CASE("evaluate_domain hand case") {
  const Split s = hand_split();
  const DomainMetrics m = evaluate_domain(pixel_forward(), s, "hand");
  CHECK(m.domain == "hand");
  CHECK(m.n == 4);
  // example 0 correct+detected; 1 has logit 0 (counts wrong); 2 correct class
  // but linf residual 0.2 > tau; 3 wrong class
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.detection_score == doctest::Approx(0.25));
  // sum of squared residuals = 0 + 0.02 + 0.04 + 0.25, over 2n components
  CHECK(m.reg_mse == doctest::Approx(0.31 / 8.0).epsilon(1e-12));
}

TEST_CASE("detection never exceeds accuracy and tau is honored") {
  const Split s = hand_split();
  for (double tau : {0.01, 0.15, 0.5, 10.0}) {
    const DomainMetrics m = evaluate_domain(pixel_forward(), s, "hand", tau);
    CHECK(m.detection_score <= m.accuracy);
  }
  // huge tau: detection equals accuracy
  CHECK(evaluate_domain(pixel_forward(), s, "hand", 10.0).detection_score ==
        doctest::Approx(0.5));
}

TEST_CASE("predict_split is batch-size invariant") {
  const Split s = hand_split();
  const SplitPredictions a = predict_split(pixel_forward(), s, 3);
  const SplitPredictions b = predict_split(pixel_forward(), s, 64);
  CHECK(a.y1 == b.y1);
  CHECK(a.y2.v == b.y2.v);
  CHECK(a.features.v == b.features.v);
  CHECK(a.y2.shape == std::vector<int>{4, 2});
}

TEST_CASE("dominant_eigenpair matches a dense Jacobi oracle") {
  // random PSD matrix B^T B, dim 5
  const int d = 5;
  Rng rng = make_rng(9, 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> bmat(d * d);
  for (double& v : bmat) v = u(rng);
  std::vector<double> a(d * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) a[i * d + j] += bmat[k * d + i] * bmat[k * d + j];

  // test-local cyclic Jacobi eigensolver
  std::vector<double> m = a, vecs(d * d, 0.0);
  for (int i = 0; i < d; ++i) vecs[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += m[p * d + q] * m[p * d + q];
    if (off < 1e-26) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        if (std::fabs(m[p * d + q]) < 1e-300) continue;
        const double theta = 0.5 * std::atan2(2.0 * m[p * d + q], m[q * d + q] - m[p * d + p]);
        const double c = std::cos(theta), sn = std::sin(theta);
        for (int k = 0; k < d; ++k) {
          const double mp = m[p * d + k], mq = m[q * d + k];
          m[p * d + k] = c * mp - sn * mq;
          m[q * d + k] = sn * mp + c * mq;
        }
        for (int k = 0; k < d; ++k) {
          const double mp = m[k * d + p], mq = m[k * d + q];
          m[k * d + p] = c * mp - sn * mq;
          m[k * d + q] = sn * mp + c * mq;
          const double vp = vecs[k * d + p], vq = vecs[k * d + q];
          vecs[k * d + p] = c * vp - sn * vq;
          vecs[k * d + q] = sn * vp + c * vq;
        }
      }
  }
  int top = 0;
  for (int i = 1; i < d; ++i)
    if (m[i * d + i] > m[top * d + top]) top = i;

  const auto [eig, vec] = dominant_eigenpair(a, d);
  CHECK(eig == doctest::Approx(m[top * d + top]).epsilon(1e-8));
  // compare up to sign
  double dot = 0.0;
  for (int i = 0; i < d; ++i) dot += vec[i] * vecs[i * d + top];
  CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-8));
  // sign convention: the largest-magnitude coordinate is positive
  int big = 0;
  for (int i = 1; i < d; ++i)
    if (std::fabs(vec[i]) > std::fabs(vec[big])) big = i;
  CHECK(vec[big] > 0.0);
}

TEST_CASE("representation similarity separates a shifted target") {
  // source features spread along x (variance 4) and y (variance ~1); targets
  // are rigid shifts so the projected centroid distance equals the shift norm
  Split source;
  source.images = Tensor::zeros({4, 3, 8, 8});
  source.y1 = {1.0, 1.0, -1.0, -1.0};
  source.y2 = Tensor::zeros({4, 2});
  const double feats[4][2] = {{2.0, 1.0}, {-2.0, -1.0}, {2.0, -1.0}, {-2.0, 1.0}};
  const int hw = 64;
  for (int i = 0; i < 4; ++i) {
    double* px = source.images.v.data() + static_cast<size_t>(i) * 3 * hw;
    px[1] = feats[i][0];
    px[2] = feats[i][1];
  }
  Split shifted = source;
  for (int i = 0; i < 4; ++i) {
    double* px = shifted.images.v.data() + static_cast<size_t>(i) * 3 * hw;
    px[1] += 3.0;  // shift along the dominant axis
  }
  std::vector<std::pair<DomainSpec, Split>> targets;
  targets.push_back({DomainSpec{"T1", BackgroundRule::Decorrelated, 0.0, 0.0}, shifted});

  const SimilarityReport r = representation_similarity(pixel_forward(), source, targets);
  REQUIRE(!r.degenerate);
  CHECK(r.eig1 > r.eig2);
  CHECK(r.eig2 > 0.0);
  REQUIRE(r.domains.size() == 2);
  CHECK(r.domains[0].domain == "source");
  CHECK(r.domains[0].centroid_distance == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.domains[1].centroid_distance == doctest::Approx(3.0).epsilon(1e-9));

  // constant features: rank-0 covariance must be flagged
  Split flat = source;
  for (int i = 0; i < 4; ++i) {
    double* px = flat.images.v.data() + static_cast<size_t>(i) * 3 * hw;
    px[1] = 0.7;
    px[2] = -0.2;
  }
  const SimilarityReport dr = representation_similarity(pixel_forward(), flat, {});
  CHECK(dr.degenerate);
}

TEST_CASE("train config json round trip, defaults, and unknown keys") {
  TrainConfig cfg;
  cfg.lambda_g = 0.25;
  cfg.epochs_search = 3;
  cfg.seed = 42;
  cfg.enable_gloss = false;
  const TrainConfig back = train_config_from_text(train_config_to_text(cfg));
  CHECK(back.lambda_g == cfg.lambda_g);
  CHECK(back.epochs_search == cfg.epochs_search);
  CHECK(back.epochs_augment == cfg.epochs_augment);
  CHECK(back.seed == cfg.seed);
  CHECK(back.enable_gloss == cfg.enable_gloss);
  CHECK(back.enable_nas == cfg.enable_nas);
  CHECK(back.effective_lambda() == 0.0);

  const TrainConfig partial = train_config_from_text(R"({"seed": 5})");
  CHECK(partial.seed == 5);
  CHECK(partial.lambda_g == 1.0);
  CHECK(partial.batch_size == 32);

  CHECK_THROWS_AS(train_config_from_text(R"({"lambda_g": 1.0, "bogus": 2})"), ParseError);
  CHECK_THROWS_AS(train_config_from_text("not json"), ParseError);

  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("tiny pipeline is deterministic and additive at lambda zero") {
  const Benchmark bench = generate_benchmark(GenConfig{64, 16, 16, 8}, 4);
  TrainConfig cfg;
  cfg.lambda_g = 0.0;
  cfg.enable_gloss = false;
  cfg.epochs_search = 1;
  cfg.epochs_augment = 1;
  cfg.channels = 4;
  cfg.p = 2;
  cfg.seed = 3;

  const RunReport a = run_pipeline(cfg, bench);
  const RunReport b = run_pipeline(cfg, bench);
  CHECK(!a.diverged);
  CHECK(a.params_hash == b.params_hash);
  CHECK(a.genotype == b.genotype);
  CHECK(metrics_to_csv(a.metrics) == metrics_to_csv(b.metrics));
  CHECK(curves_to_csv(a.curves) == curves_to_csv(b.curves));
  CHECK(a.dataset_hash == benchmark_hash(bench));
  REQUIRE(a.metrics.size() == 5);  // source_test + 4 targets
  CHECK(a.metrics[0].domain == "source_test");

  // with the g-term off, every epoch satisfies total == cls + reg exactly
  for (const EpochRecord& e : a.curves) {
    CHECK(e.loss.lambda_g == 0.0);
    CHECK(e.loss.total == e.loss.cls + e.loss.reg);
  }

  // different seed moves the outcome
  TrainConfig other = cfg;
  other.seed = 9;
  CHECK(run_pipeline(other, bench).params_hash != a.params_hash);
}

TEST_CASE("sweep and ablation drivers aggregate tiny runs") {
  const Benchmark bench = generate_benchmark(GenConfig{48, 12, 12, 8}, 6);
  TrainConfig base;
  base.epochs_search = 1;
  base.epochs_augment = 1;
  base.channels = 4;
  base.p = 2;

  const SweepReport sweep = lambda_sweep(base, {0.0, 0.1}, {0, 1}, bench);
  REQUIRE(sweep.cells.size() == 2);
  CHECK(sweep.dataset_hash == benchmark_hash(bench));
  for (const CellStat& c : sweep.cells)
    CHECK(static_cast<int>(c.scores.size()) + c.aborted == 2);
  const std::string csv = sweep_to_csv(sweep);
  CHECK(csv.rfind("lambda_g,mean,sd,seeds,aborted", 0) == 0);

  const AblationReport abl = ablation_grid(base, {0, 1}, bench);
  for (const CellStat& c : abl.cells)
    CHECK(static_cast<int>(c.scores.size()) + c.aborted == 2);
  CHECK(ablation_to_csv(abl).rfind("nas,gloss,mean,sd,seeds,aborted", 0) == 0);

  const OpFrequencyReport freq = arch_stability(base, {0, 1}, bench);
  REQUIRE(freq.fractions.size() == 2);
  for (const auto& per_cell : freq.fractions)
    for (const auto& ops : per_cell) {
      double sum = 0.0;
      for (double f : ops) sum += f;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK(freq.genotypes.size() == 2);
}

TEST_CASE("enable_nas=false freezes the architecture logits") {
  const Benchmark bench = generate_benchmark(GenConfig{64, 16, 16, 8}, 4);
  TrainConfig cfg;
  cfg.lambda_g = 0.0;
  cfg.enable_gloss = false;
  cfg.enable_nas = false;
  cfg.epochs_search = 1;
  cfg.channels = 4;
  cfg.p = 2;
  cfg.seed = 3;

  const SearchOutput one = search_stage(bench.source_train, cfg);
  TrainConfig cfg2 = cfg;
  cfg2.epochs_search = 2;
  const SearchOutput two = search_stage(bench.source_train, cfg2);
  // frozen arch: identical logits regardless of training length
  for (const auto& ent : one.model.params().entries())
    if (ent.group == Group::Arch) {
      bool found = false;
      for (const auto& e2 : two.model.params().entries())
        if (e2.name == ent.name) {
          CHECK(e2.value.v == ent.value.v);
          found = true;
        }
      CHECK(found);
    }
  CHECK(one.genotype == two.genotype);

  // with NAS on, the logits move
  TrainConfig on = cfg2;
  on.enable_nas = true;
  const SearchOutput trained = search_stage(bench.source_train, on);
  bool any_diff = false;
  for (const auto& ent : trained.model.params().entries())
    if (ent.group == Group::Arch)
      for (const auto& e2 : two.model.params().entries())
        if (e2.name == ent.name && e2.value.v != ent.value.v) any_diff = true;
  CHECK(any_diff);
}
