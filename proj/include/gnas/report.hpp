#pragma once

#include <array>
#include <string>
#include <vector>

#include "gnas/trainer.hpp"

namespace gnas {

struct SimilarityReport {
  std::vector<double> component1, component2;  // principal directions, dim F
  double eig1 = 0.0, eig2 = 0.0;
  bool degenerate = false;  // source covariance rank < 2
  struct DomainProjection {
    std::string domain;
    std::vector<std::array<double, 2>> points;
    std::array<double, 2> centroid{0.0, 0.0};
    double centroid_distance = 0.0;  // to the source centroid
  };
  std::vector<DomainProjection> domains;  // source first
};

/// Top-2 PCA of the source features by power iteration (tolerance 1e-10,
/// deflation for the second component, sign fixed by the largest-magnitude
/// coordinate); every domain is projected into that plane. At most `sample`
/// examples per domain (the leading ones, deterministic).
SimilarityReport representation_similarity(const ForwardFn& fwd, const Split& source,
                                           const std::vector<std::pair<DomainSpec, Split>>& targets,
                                           int sample = 200);

/// Power-iteration helpers exposed for verification.
/// Returns (eigenvalue, eigenvector) of the dominant component of a symmetric
/// positive-semidefinite matrix (row-major dim x dim).
std::pair<double, std::vector<double>> dominant_eigenpair(const std::vector<double>& m, int dim,
                                                          double tol = 1e-10);

struct CellStat {
  std::vector<double> scores;  // per completed seed, target-average detection
  double mean = 0.0;
  double sd = 0.0;
  int aborted = 0;  // diverged runs, excluded from the mean
};

struct SweepReport {
  std::vector<double> lambdas;
  std::vector<CellStat> cells;
  std::string dataset_hash;
};

struct AblationReport {
  // order: (nas off, gloss off), (nas off, gloss on), (nas on, gloss off), (nas on, gloss on)
  std::array<CellStat, 4> cells;
  std::string dataset_hash;
};

struct OpFrequencyReport {
  std::vector<uint64_t> seeds;
  // fractions[seed][cell] with cell 0 = normal, 1 = reduction
  std::vector<std::array<std::array<double, kNumOps>, 2>> fractions;
  std::vector<Genotype> genotypes;
};

/// One full pipeline per (lambda, seed); sequential when jobs == 1.
SweepReport lambda_sweep(const TrainConfig& base, const std::vector<double>& values,
                         const std::vector<uint64_t>& seeds, const Benchmark& bench,
                         const std::string& out_root = "", int jobs = 1);

AblationReport ablation_grid(const TrainConfig& base, const std::vector<uint64_t>& seeds,
                             const Benchmark& bench, const std::string& out_root = "",
                             int jobs = 1);

/// Search stage + discretization only, per seed.
OpFrequencyReport arch_stability(const TrainConfig& base, const std::vector<uint64_t>& seeds,
                                 const Benchmark& bench);

std::string sweep_to_csv(const SweepReport& r);
std::string ablation_to_csv(const AblationReport& r);
std::string op_frequency_to_csv(const OpFrequencyReport& r);
std::string similarity_to_csv(const SimilarityReport& r);
/// Scatter plot data: domain,x,y per row.
std::string similarity_points_to_csv(const SimilarityReport& r);

}  // namespace gnas
