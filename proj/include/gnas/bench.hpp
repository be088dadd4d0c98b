#pragma once

#include <array>
#include <string>
#include <vector>

#include "gnas/tensor.hpp"

namespace gnas {

/// How the channel-1 background level relates to the class label.
enum class BackgroundRule { Correlated, Decorrelated, Flipped };

struct DomainSpec {
  std::string name;
  BackgroundRule rule = BackgroundRule::Correlated;
  double brightness_offset = 0.0;  // in [-0.5, 0]
  double pixel_noise_sigma = 0.0;
};

/// Column-batched example storage: images [N,3,H,W] in [0,1], labels in
/// {-1,+1}, patch-center targets in [-0.8,0.8]^2 (row, col order).
struct Split {
  Tensor images;
  std::vector<double> y1;
  Tensor y2;

  int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
  void gather(const std::vector<int>& idx, Tensor& images_out, std::vector<double>& y1_out,
              Tensor& y2_out) const;
};

struct GenConfig {
  int n_source_train = 2000;
  int n_source_test = 500;
  int n_target = 500;
  int grid = 8;  // patch is 3x3; grid must fit it
};

struct Benchmark {
  Split source_train;
  Split source_test;
  std::vector<std::pair<DomainSpec, Split>> targets;
  uint64_t seed = 0;
  std::string version;
  GenConfig config;
};

inline constexpr const char* kGeneratorVersion = "gnas-bench-1";

/// Default target shifts: T1 decorrelated; T2 flipped; T3 decorrelated with
/// brightness -0.3; T4 flipped with pixel noise sigma 0.1.
std::vector<DomainSpec> default_targets();

Benchmark generate_benchmark(const GenConfig& cfg, uint64_t seed);

// dataset directory: manifest.json + one binary tensor file per split
void save_benchmark(const Benchmark& b, const std::string& dir);
Benchmark load_benchmark(const std::string& dir);
std::string split_sha256(const Split& s);
/// Hash of the whole dataset (manifest-level identity).
std::string benchmark_hash(const Benchmark& b);

/// Epoch = seeded permutation consumed in order; the last partial batch is
/// kept.
class BatchSampler {
 public:
  BatchSampler(int n, int batch_size, uint64_t seed);
  void start_epoch(int epoch);
  bool next(std::vector<int>& indices);
  int batches_per_epoch() const;

 private:
  int n_, batch_size_;
  uint64_t seed_;
  std::vector<int> perm_;
  int cursor_ = 0;
};

// ---- benchmark-contract analysis (brute-force oracles) ----

/// Pearson correlation between mean channel-1 level and the class label.
double background_label_correlation(const Split& s);
/// Threshold classifier on mean channel-1 level.
double easy_threshold_accuracy(const Split& s, double threshold = 0.5);
/// Nearest-centroid classifier on the brightest channel-0 3x3 patch.
double hard_oracle_accuracy(const Split& s);
/// Predicted y2 from brightest-patch localization in channel 0.
std::array<double, 2> localize_patch(const Tensor& images, int index);

}  // namespace gnas
