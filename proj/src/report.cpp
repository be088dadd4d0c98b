#include "gnas/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <thread>

namespace gnas {

namespace {

Split head_of(const Split& s, int count) {
  const int take = std::min(count, s.size());
  std::vector<int> idx(take);
  for (int i = 0; i < take; ++i) idx[i] = i;
  Split out;
  s.gather(idx, out.images, out.y1, out.y2);
  return out;
}

void stats(CellStat& c) {
  const size_t k = c.scores.size();
  if (k == 0) return;
  double m = 0.0;
  for (double s : c.scores) m += s;
  m /= static_cast<double>(k);
  double v = 0.0;
  for (double s : c.scores) v += (s - m) * (s - m);
  c.mean = m;
  c.sd = k > 1 ? std::sqrt(v / static_cast<double>(k - 1)) : 0.0;
}

// runs fn(i) for i in [0, count) on up to `jobs` threads
void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  const int nthreads = std::min(jobs, count);
  workers.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t)
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& w : workers) w.join();
}

std::string trim_number(double v) {
  std::string s = fmt_double(v);
  return s;
}

}  // namespace

std::pair<double, std::vector<double>> dominant_eigenpair(const std::vector<double>& m, int dim,
                                                          double tol) {
  GNAS_CHECK(dim >= 1 && static_cast<int>(m.size()) == dim * dim,
             "dominant_eigenpair: bad matrix");
  std::vector<double> v(dim), next(dim);
  for (int i = 0; i < dim; ++i) v[i] = 1.0 + 1e-3 * i;  // deterministic, not axis-aligned
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (double& x : v) x /= norm;
  double lambda = 0.0;
  for (int it = 0; it < 100000; ++it) {
    for (int i = 0; i < dim; ++i) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) s += m[i * dim + j] * v[j];
      next[i] = s;
    }
    lambda = std::inner_product(v.begin(), v.end(), next.begin(), 0.0);
    norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
    if (norm < 1e-300) return {0.0, v};  // zero matrix / exhausted spectrum
    double delta = 0.0;
    for (int i = 0; i < dim; ++i) {
      next[i] /= norm;
      delta = std::max(delta, std::fabs(next[i] - v[i]));
    }
    std::swap(v, next);
    if (delta < tol) break;
  }
  // sign convention: largest-magnitude coordinate positive
  int arg = 0;
  for (int i = 1; i < dim; ++i)
    if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;
  return {lambda, v};
}

SimilarityReport representation_similarity(const ForwardFn& fwd, const Split& source,
                                           const std::vector<std::pair<DomainSpec, Split>>& targets,
                                           int sample) {
  GNAS_CHECK(sample >= 2, "representation_similarity: need at least 2 samples");
  SimilarityReport rep;

  const Split src = head_of(source, sample);
  const SplitPredictions sp = predict_split(fwd, src);
  const int n = src.size();
  const int f = sp.features.shape[1];

  std::vector<double> mean(f, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) mean[j] += sp.features.v[i * f + j];
  for (double& x : mean) x /= n;

  std::vector<double> cov(f * f, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < f; ++a) {
      const double da = sp.features.v[i * f + a] - mean[a];
      for (int b = 0; b < f; ++b)
        cov[a * f + b] += da * (sp.features.v[i * f + b] - mean[b]);
    }
  for (double& x : cov) x /= (n - 1);

  auto [e1, v1] = dominant_eigenpair(cov, f);
  std::vector<double> deflated = cov;
  for (int a = 0; a < f; ++a)
    for (int b = 0; b < f; ++b) deflated[a * f + b] -= e1 * v1[a] * v1[b];
  auto [e2, v2] = dominant_eigenpair(deflated, f);
  rep.component1 = v1;
  rep.component2 = v2;
  rep.eig1 = e1;
  rep.eig2 = e2;
  rep.degenerate = e1 <= 1e-12 || e2 <= 1e-12 * std::max(1.0, e1);

  auto project = [&](const std::string& name, const Split& split) {
    const Split sub = head_of(split, sample);
    const SplitPredictions pp = predict_split(fwd, sub);
    SimilarityReport::DomainProjection proj;
    proj.domain = name;
    proj.points.resize(sub.size());
    for (int i = 0; i < sub.size(); ++i) {
      double x = 0.0, y = 0.0;
      for (int j = 0; j < f; ++j) {
        const double d = pp.features.v[i * f + j] - mean[j];
        x += d * v1[j];
        y += d * v2[j];
      }
      proj.points[i] = {x, y};
      proj.centroid[0] += x;
      proj.centroid[1] += y;
    }
    proj.centroid[0] /= sub.size();
    proj.centroid[1] /= sub.size();
    return proj;
  };

  rep.domains.push_back(project("source", source));
  const std::array<double, 2> src_c = rep.domains[0].centroid;
  rep.domains[0].centroid_distance = 0.0;
  for (const auto& [dom, split] : targets) {
    auto proj = project(dom.name, split);
    proj.centroid_distance = std::hypot(proj.centroid[0] - src_c[0], proj.centroid[1] - src_c[1]);
    rep.domains.push_back(std::move(proj));
  }
  return rep;
}

SweepReport lambda_sweep(const TrainConfig& base, const std::vector<double>& values,
                         const std::vector<uint64_t>& seeds, const Benchmark& bench,
                         const std::string& out_root, int jobs) {
  GNAS_CHECK(!values.empty(), "lambda_sweep: no lambda values");
  GNAS_CHECK(seeds.size() >= 1, "lambda_sweep: no seeds");
  SweepReport rep;
  rep.lambdas = values;
  rep.cells.resize(values.size());
  rep.dataset_hash = benchmark_hash(bench);
  const int per_cell = static_cast<int>(seeds.size());
  std::vector<RunReport> runs(values.size() * seeds.size());
  parallel_for(static_cast<int>(runs.size()), jobs, [&](int i) {
    const size_t vi = i / per_cell, si = i % per_cell;
    TrainConfig cfg = base;
    cfg.lambda_g = values[vi];
    cfg.enable_gloss = values[vi] != 0.0;
    cfg.seed = seeds[si];
    std::string dir;
    if (!out_root.empty())
      dir = (std::filesystem::path(out_root) /
             ("lambda_" + trim_number(values[vi]) + "_seed_" + std::to_string(seeds[si])))
                .string();
    runs[i] = run_pipeline(cfg, bench, dir);
  });
  for (size_t i = 0; i < runs.size(); ++i) {
    CellStat& c = rep.cells[i / per_cell];
    if (runs[i].diverged)
      ++c.aborted;
    else
      c.scores.push_back(runs[i].target_avg_detection);
  }
  for (CellStat& c : rep.cells) stats(c);
  return rep;
}

AblationReport ablation_grid(const TrainConfig& base, const std::vector<uint64_t>& seeds,
                             const Benchmark& bench, const std::string& out_root, int jobs) {
  GNAS_CHECK(seeds.size() >= 1, "ablation_grid: no seeds");
  AblationReport rep;
  rep.dataset_hash = benchmark_hash(bench);
  const int per_cell = static_cast<int>(seeds.size());
  std::vector<RunReport> runs(4 * seeds.size());
  parallel_for(static_cast<int>(runs.size()), jobs, [&](int i) {
    const int cell = i / per_cell, si = i % per_cell;
    TrainConfig cfg = base;
    cfg.enable_nas = (cell & 2) != 0;
    cfg.enable_gloss = (cell & 1) != 0;
    cfg.seed = seeds[si];
    std::string dir;
    if (!out_root.empty())
      dir = (std::filesystem::path(out_root) /
             ("nas" + std::to_string(cfg.enable_nas ? 1 : 0) + "_gloss" +
              std::to_string(cfg.enable_gloss ? 1 : 0) + "_seed_" + std::to_string(seeds[si])))
                .string();
    runs[i] = run_pipeline(cfg, bench, dir);
  });
  for (size_t i = 0; i < runs.size(); ++i) {
    CellStat& c = rep.cells[i / per_cell];
    if (runs[i].diverged)
      ++c.aborted;
    else
      c.scores.push_back(runs[i].target_avg_detection);
  }
  for (CellStat& c : rep.cells) stats(c);
  return rep;
}

OpFrequencyReport arch_stability(const TrainConfig& base, const std::vector<uint64_t>& seeds,
                                 const Benchmark& bench) {
  GNAS_CHECK(seeds.size() >= 1, "arch_stability: no seeds");
  OpFrequencyReport rep;
  rep.seeds = seeds;
  for (uint64_t seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    const SearchOutput search = search_stage(bench.source_train, cfg);
    std::array<std::array<double, kNumOps>, 2> frac{};
    const std::array<const std::vector<Genotype::NodeChoice>*, 2> cells{
        &search.genotype.normal, &search.genotype.reduction};
    for (int c = 0; c < 2; ++c) {
      int total = 0;
      for (const auto& node : *cells[c])
        for (const auto& edge : node.edges) {
          frac[c][static_cast<int>(edge.op)] += 1.0;
          ++total;
        }
      if (total > 0)
        for (double& x : frac[c]) x /= total;
    }
    rep.fractions.push_back(frac);
    rep.genotypes.push_back(search.genotype);
  }
  return rep;
}

std::string sweep_to_csv(const SweepReport& r) {
  std::string csv = "lambda_g,mean,sd,seeds,aborted\n";
  for (size_t i = 0; i < r.lambdas.size(); ++i)
    csv += fmt_double(r.lambdas[i]) + "," + fmt_double(r.cells[i].mean) + "," +
           fmt_double(r.cells[i].sd) + "," + std::to_string(r.cells[i].scores.size()) + "," +
           std::to_string(r.cells[i].aborted) + "\n";
  return csv;
}

std::string ablation_to_csv(const AblationReport& r) {
  std::string csv = "nas,gloss,mean,sd,seeds,aborted\n";
  for (int cell = 0; cell < 4; ++cell)
    csv += std::to_string((cell & 2) ? 1 : 0) + "," + std::to_string(cell & 1) + "," +
           fmt_double(r.cells[cell].mean) + "," + fmt_double(r.cells[cell].sd) + "," +
           std::to_string(r.cells[cell].scores.size()) + "," +
           std::to_string(r.cells[cell].aborted) + "\n";
  return csv;
}

std::string op_frequency_to_csv(const OpFrequencyReport& r) {
  std::string csv = "seed,cell,op,fraction\n";
  for (size_t s = 0; s < r.seeds.size(); ++s)
    for (int c = 0; c < 2; ++c)
      for (int op = 0; op < kNumOps; ++op)
        csv += std::to_string(r.seeds[s]) + "," + (c == 0 ? "normal" : "reduction") + "," +
               std::string(op_name(static_cast<OpKind>(op))) + "," +
               fmt_double(r.fractions[s][c][op]) + "\n";
  return csv;
}

std::string similarity_to_csv(const SimilarityReport& r) {
  std::string csv = "domain,centroid_x,centroid_y,centroid_distance,n\n";
  for (const auto& d : r.domains)
    csv += d.domain + "," + fmt_double(d.centroid[0]) + "," + fmt_double(d.centroid[1]) + "," +
           fmt_double(d.centroid_distance) + "," + std::to_string(d.points.size()) + "\n";
  return csv;
}

std::string similarity_points_to_csv(const SimilarityReport& r) {
  std::string csv = "domain,x,y\n";
  for (const auto& d : r.domains)
    for (const auto& p : d.points)
      csv += d.domain + "," + fmt_double(p[0]) + "," + fmt_double(p[1]) + "\n";
  return csv;
}

}  // namespace gnas
