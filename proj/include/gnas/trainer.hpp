#pragma once

#include <string>
#include <vector>

#include "gnas/bench.hpp"
#include "gnas/losses.hpp"
#include "gnas/metrics.hpp"
#include "gnas/supernet.hpp"

namespace gnas {

struct TrainConfig {
  double lambda_g = 1.0;
  double lr = 0.02;
  int epochs_search = 12;
  int epochs_augment = 12;
  int batch_size = 32;
  int channels = 8;
  int p = 4;
  uint64_t seed = 0;
  bool enable_nas = true;    // false: arch logits frozen at random init
  bool enable_gloss = true;  // false: lambda_g treated as 0

  double effective_lambda() const { return enable_gloss ? lambda_g : 0.0; }
  NetConfig net() const { return NetConfig{channels, p}; }
  void validate() const;
};

std::string train_config_to_text(const TrainConfig& cfg);
/// Rejects unknown keys.
TrainConfig train_config_from_text(const std::string& text);

struct EpochRecord {
  std::string stage;  // "search" | "augment"
  int epoch = 0;
  LossBreakdown loss;  // example-weighted mean over the epoch's batches
};

/// Aborts on non-finite or |total| > 1e6 batch loss.
inline constexpr double kDivergenceGuard = 1e6;

struct SearchOutput {
  SupernetModel model;
  Genotype genotype;
  std::vector<EpochRecord> curves;
  bool diverged = false;
};

struct AugmentOutput {
  DiscreteModel model;
  std::vector<EpochRecord> curves;
  bool diverged = false;
};

SearchOutput search_stage(const Split& source_train, const TrainConfig& cfg);
AugmentOutput augment_stage(const Split& source_train, const Genotype& genotype,
                            const TrainConfig& cfg);

struct RunReport {
  TrainConfig config;
  std::string dataset_hash;
  Genotype genotype;
  std::vector<EpochRecord> curves;     // search then augment
  std::vector<DomainMetrics> metrics;  // source_test first, then targets
  double target_avg_detection = 0.0;   // mean over target domains only
  int regime_violations = 0;           // smooth-L1 components past the quadratic zone
  double wall_seconds = 0.0;
  std::string params_hash;
  bool diverged = false;
};

/// Full two-stage pipeline plus evaluation. When `out_dir` is nonempty, writes
/// config.json, genotype.json, curves.csv, metrics.csv, checkpoint.bin and
/// report.txt there.
RunReport run_pipeline(const TrainConfig& cfg, const Benchmark& bench,
                       const std::string& out_dir = "");

void write_run_report(const RunReport& report, const std::string& out_dir);
std::string curves_to_csv(const std::vector<EpochRecord>& curves);
std::string metrics_to_csv(const std::vector<DomainMetrics>& metrics);

}  // namespace gnas
