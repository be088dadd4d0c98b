#include "gnas/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>

#include <json.hpp>

namespace gnas {

namespace {

using json = nlohmann::ordered_json;

struct StageResult {
  std::vector<EpochRecord> curves;
  bool diverged = false;
};

template <typename Fwd>
StageResult run_stage(ParamStore& store, const Split& train, const TrainConfig& cfg,
                      const std::string& stage, int epochs, const std::set<Group>& trainable,
                      uint64_t sampler_tag, Fwd&& fwd) {
  StageResult res;
  const int batch = std::min(cfg.batch_size, train.size());
  BatchSampler sampler(train.size(), batch, cfg.seed * 4 + sampler_tag);
  std::vector<std::pair<std::string, VarId>> plist;
  std::vector<int> idx;
  Tensor images, y2;
  std::vector<double> y1;
  for (int e = 0; e < epochs; ++e) {
    sampler.start_epoch(e);
    LossBreakdown acc{};
    double seen = 0.0;
    while (sampler.next(idx)) {
      train.gather(idx, images, y1, y2);
      Tape tape;
      const ParamBinding bind = bind_params(tape, store, trainable);
      const Prediction pred = fwd(tape, images, bind);
      const LossNodes nodes = train_loss(tape, pred, y1, y2, cfg.effective_lambda());
      const LossBreakdown b = read_breakdown(tape, nodes, cfg.effective_lambda());
      if (!std::isfinite(b.total) || std::fabs(b.total) > kDivergenceGuard) {
        res.diverged = true;
        return res;
      }
      plist.clear();
      for (const auto& ent : store.entries())
        if (trainable.count(ent.group)) plist.emplace_back(ent.name, bind.at(ent.name));
      const GradMap grads = forward_backward(tape, nodes.total, plist);
      sgd_step(store, grads, cfg.lr, trainable);
      const double w = static_cast<double>(idx.size());
      acc.cls += b.cls * w;
      acc.reg += b.reg * w;
      acc.g += b.g * w;
      acc.total += b.total * w;
      seen += w;
    }
    res.curves.push_back(
        {stage, e,
         {acc.cls / seen, acc.reg / seen, acc.g / seen, acc.total / seen, cfg.effective_lambda()}});
  }
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  GNAS_CHECK(lr > 0.0, "config: lr must be positive");
  GNAS_CHECK(lambda_g >= 0.0, "config: lambda_g must be non-negative");
  GNAS_CHECK(epochs_search >= 1 && epochs_augment >= 1, "config: epochs must be >= 1");
  GNAS_CHECK(batch_size >= 1, "config: batch_size must be >= 1");
  GNAS_CHECK(channels >= 1 && p >= 1, "config: channels and p must be >= 1");
}

std::string train_config_to_text(const TrainConfig& cfg) {
  json j{{"lambda_g", cfg.lambda_g},
         {"lr", cfg.lr},
         {"epochs_search", cfg.epochs_search},
         {"epochs_augment", cfg.epochs_augment},
         {"batch_size", cfg.batch_size},
         {"channels", cfg.channels},
         {"p", cfg.p},
         {"seed", cfg.seed},
         {"enable_nas", cfg.enable_nas},
         {"enable_gloss", cfg.enable_gloss}};
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config parse: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config parse: expected a JSON object");
  TrainConfig cfg;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "lambda_g")
        cfg.lambda_g = it.value().get<double>();
      else if (k == "lr")
        cfg.lr = it.value().get<double>();
      else if (k == "epochs_search")
        cfg.epochs_search = it.value().get<int>();
      else if (k == "epochs_augment")
        cfg.epochs_augment = it.value().get<int>();
      else if (k == "batch_size")
        cfg.batch_size = it.value().get<int>();
      else if (k == "channels")
        cfg.channels = it.value().get<int>();
      else if (k == "p")
        cfg.p = it.value().get<int>();
      else if (k == "seed")
        cfg.seed = it.value().get<uint64_t>();
      else if (k == "enable_nas")
        cfg.enable_nas = it.value().get<bool>();
      else if (k == "enable_gloss")
        cfg.enable_gloss = it.value().get<bool>();
      else
        throw ParseError("config parse: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config parse: ") + e.what());
  }
  return cfg;
}

SearchOutput search_stage(const Split& source_train, const TrainConfig& cfg) {
  cfg.validate();
  std::set<Group> trainable{Group::Backbone, Group::Head};
  if (cfg.enable_nas) trainable.insert(Group::Arch);
  SearchOutput out{SupernetModel(cfg.net(), cfg.seed), {}, {}, false};
  StageResult sr =
      run_stage(out.model.params(), source_train, cfg, "search", cfg.epochs_search, trainable, 1,
                [&](Tape& tape, const Tensor& x, const ParamBinding& bind) {
                  return out.model.forward(tape, x, bind);
                });
  out.curves = std::move(sr.curves);
  out.diverged = sr.diverged;
  out.genotype = out.model.discretize();
  return out;
}

AugmentOutput augment_stage(const Split& source_train, const Genotype& genotype,
                            const TrainConfig& cfg) {
  cfg.validate();
  validate_genotype(genotype);
  AugmentOutput out{reconstruct(genotype, cfg.net(), cfg.seed), {}, false};
  const std::set<Group> trainable{Group::Backbone, Group::Head};
  StageResult sr =
      run_stage(out.model.params(), source_train, cfg, "augment", cfg.epochs_augment, trainable, 2,
                [&](Tape& tape, const Tensor& x, const ParamBinding& bind) {
                  return out.model.forward(tape, x, bind);
                });
  out.curves = std::move(sr.curves);
  out.diverged = sr.diverged;
  return out;
}

std::string curves_to_csv(const std::vector<EpochRecord>& curves) {
  std::string csv = "stage,epoch,cls,reg,g,total\n";
  for (const EpochRecord& r : curves)
    csv += r.stage + "," + std::to_string(r.epoch) + "," + fmt_double(r.loss.cls) + "," +
           fmt_double(r.loss.reg) + "," + fmt_double(r.loss.g) + "," + fmt_double(r.loss.total) +
           "\n";
  return csv;
}

std::string metrics_to_csv(const std::vector<DomainMetrics>& metrics) {
  std::string csv = "domain,accuracy,reg_mse,detection_score\n";
  for (const DomainMetrics& m : metrics)
    csv += m.domain + "," + fmt_double(m.accuracy) + "," + fmt_double(m.reg_mse) + "," +
           fmt_double(m.detection_score) + "\n";
  return csv;
}

void write_run_report(const RunReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_file((dir / "config.json").string(), train_config_to_text(report.config));
  write_file((dir / "genotype.json").string(), genotype_to_text(report.genotype));
  write_file((dir / "curves.csv").string(), curves_to_csv(report.curves));
  write_file((dir / "metrics.csv").string(), metrics_to_csv(report.metrics));
  std::string txt;
  txt += "status: " + std::string(report.diverged ? "diverged" : "ok") + "\n";
  txt += "seed: " + std::to_string(report.config.seed) + "\n";
  txt += "dataset_hash: " + report.dataset_hash + "\n";
  txt += "params_hash: " + report.params_hash + "\n";
  txt += "target_avg_detection: " + fmt_double(report.target_avg_detection) + "\n";
  txt += "regime_violations: " + std::to_string(report.regime_violations) + "\n";
  txt += "wall_seconds: " + fmt_double(report.wall_seconds) + "\n";
  for (const DomainMetrics& m : report.metrics)
    txt += "domain " + m.domain + ": accuracy=" + fmt_double(m.accuracy) +
           " reg_mse=" + fmt_double(m.reg_mse) +
           " detection_score=" + fmt_double(m.detection_score) + " n=" + std::to_string(m.n) +
           "\n";
  write_file((dir / "report.txt").string(), txt);
}

RunReport run_pipeline(const TrainConfig& cfg, const Benchmark& bench,
                       const std::string& out_dir) {
  cfg.validate();
  GNAS_CHECK(!bench.targets.empty(), "run_pipeline: benchmark has no target domains");
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.config = cfg;
  rep.dataset_hash = benchmark_hash(bench);

  SearchOutput search = search_stage(bench.source_train, cfg);
  rep.curves = search.curves;
  rep.genotype = search.genotype;
  if (search.diverged) {
    rep.diverged = true;
  } else {
    AugmentOutput aug = augment_stage(bench.source_train, search.genotype, cfg);
    rep.curves.insert(rep.curves.end(), aug.curves.begin(), aug.curves.end());
    if (aug.diverged) {
      rep.diverged = true;
    } else {
      const ForwardFn fwd = make_forward(aug.model);
      rep.metrics.push_back(evaluate_domain(fwd, bench.source_test, "source_test"));
      double sum = 0.0;
      for (const auto& [dom, split] : bench.targets) {
        DomainMetrics m = evaluate_domain(fwd, split, dom.name);
        sum += m.detection_score;
        rep.metrics.push_back(std::move(m));
      }
      rep.target_avg_detection = sum / static_cast<double>(bench.targets.size());
      const SplitPredictions sp = predict_split(fwd, bench.source_test);
      rep.regime_violations = count_regime_violations(sp.y2, bench.source_test.y2);
      rep.params_hash = params_hash(aug.model.params());
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        save_params(aug.model.params(),
                    (std::filesystem::path(out_dir) / "checkpoint.bin").string());
      }
    }
  }

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out_dir.empty()) write_run_report(rep, out_dir);
  return rep;
}

}  // namespace gnas
