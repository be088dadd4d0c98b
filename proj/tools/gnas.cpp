#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gnas/dual.hpp"
#include "gnas/report.hpp"
#include "gnas/trainer.hpp"

namespace fs = std::filesystem;
using namespace gnas;

namespace {

std::string resolve_out(const std::string& out, const std::string& leaf) {
  if (!out.empty()) return out;
  if (const char* root = std::getenv("GNAS_OUT_ROOT")) return (fs::path(root) / leaf).string();
  throw ParseError("no --out given and GNAS_OUT_ROOT is unset");
}

TrainConfig load_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return train_config_from_text(read_file(path));
}

// flags beat config-file values beat defaults
struct ConfigFlags {
  CLI::Option *lambda = nullptr, *lr = nullptr, *es = nullptr, *ea = nullptr, *bs = nullptr,
              *ch = nullptr, *p = nullptr, *seed = nullptr, *nas = nullptr, *gloss = nullptr;
  double lambda_v = 1.0, lr_v = 0.02;
  int es_v = 12, ea_v = 12, bs_v = 32, ch_v = 8, p_v = 4;
  uint64_t seed_v = 0;
  bool nas_v = true, gloss_v = true;

  void attach(CLI::App* app) {
    lambda = app->add_option("--lambda-g", lambda_v, "G-loss weight");
    lr = app->add_option("--lr", lr_v, "SGD learning rate");
    es = app->add_option("--epochs-search", es_v, "search-stage epochs");
    ea = app->add_option("--epochs-augment", ea_v, "augment-stage epochs");
    bs = app->add_option("--batch-size", bs_v, "minibatch size");
    ch = app->add_option("--channels", ch_v, "cell channel width");
    p = app->add_option("--nodes", p_v, "intermediate nodes per cell");
    seed = app->add_option("--seed", seed_v, "run seed");
    nas = app->add_flag("--nas,!--no-nas", nas_v, "train architecture logits");
    gloss = app->add_flag("--gloss,!--no-gloss", gloss_v, "apply the G-loss term");
  }

  TrainConfig apply(TrainConfig cfg) const {
    if (lambda->count()) cfg.lambda_g = lambda_v;
    if (lr->count()) cfg.lr = lr_v;
    if (es->count()) cfg.epochs_search = es_v;
    if (ea->count()) cfg.epochs_augment = ea_v;
    if (bs->count()) cfg.batch_size = bs_v;
    if (ch->count()) cfg.channels = ch_v;
    if (p->count()) cfg.p = p_v;
    if (seed->count()) cfg.seed = seed_v;
    if (nas->count()) cfg.enable_nas = nas_v;
    if (gloss->count()) cfg.enable_gloss = gloss_v;
    return cfg;
  }
};

std::vector<DomainMetrics> eval_model(const DiscreteModel& model, const Benchmark& bench,
                                      double tau, const std::string& out_dir) {
  const ForwardFn fwd = make_forward(model);
  std::vector<DomainMetrics> metrics;
  metrics.push_back(evaluate_domain(fwd, bench.source_test, "source_test", tau));
  for (const auto& [dom, split] : bench.targets)
    metrics.push_back(evaluate_domain(fwd, split, dom.name, tau));
  const SimilarityReport sim = representation_similarity(fwd, bench.source_test, bench.targets);
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "metrics.csv").string(), metrics_to_csv(metrics));
  write_file((fs::path(out_dir) / "similarity.csv").string(), similarity_to_csv(sim));
  write_file((fs::path(out_dir) / "similarity_points.csv").string(),
             similarity_points_to_csv(sim));
  return metrics;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"G-NAS desk-scale experiment driver"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic benchmark");
  std::string gen_out;
  uint64_t gen_seed = 0;
  GenConfig gen_cfg;
  gen->add_option("--out", gen_out, "dataset directory");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--n-train", gen_cfg.n_source_train, "source training examples");
  gen->add_option("--n-test", gen_cfg.n_source_test, "source test examples");
  gen->add_option("--n-target", gen_cfg.n_target, "examples per target domain");
  gen->add_option("--grid", gen_cfg.grid, "image side length");

  // ---- search / augment / pipeline ----
  std::string cfg_path, data_dir, out_dir, genotype_path, checkpoint_path;
  double tau = kDetectionTau;
  auto* search = app.add_subcommand("search", "search stage only; saves the genotype");
  auto* augment = app.add_subcommand("augment", "augment stage from a saved genotype");
  auto* pipeline = app.add_subcommand("pipeline", "full search + augment + evaluation");
  auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint on every domain");
  ConfigFlags search_flags, augment_flags, pipeline_flags;
  for (auto& [sub, flags] :
       std::initializer_list<std::pair<CLI::App*, ConfigFlags*>>{
           {search, &search_flags}, {augment, &augment_flags}, {pipeline, &pipeline_flags}}) {
    sub->add_option("--config", cfg_path, "JSON config file");
    sub->add_option("--data", data_dir, "dataset directory")->required();
    sub->add_option("--out", out_dir, "output directory");
    flags->attach(sub);
  }
  augment->add_option("--genotype", genotype_path, "genotype file")->required();
  eval->add_option("--config", cfg_path, "JSON config file");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--genotype", genotype_path, "genotype file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "parameter checkpoint")->required();
  eval->add_option("--out", out_dir, "output directory");
  eval->add_option("--tau", tau, "detection localization threshold");

  // ---- verify-theorem ----
  auto* verify = app.add_subcommand("verify-theorem", "numerical duality verification");
  int v_instances = 20, v_nmax = 8;
  double v_tol = 1e-4;
  uint64_t v_seed = 0;
  std::string v_out;
  verify->add_option("--instances", v_instances, "number of random instances");
  verify->add_option("--n-max", v_nmax, "largest instance size");
  verify->add_option("--tol", v_tol, "relative-gap tolerance");
  verify->add_option("--seed", v_seed, "instance seed");
  verify->add_option("--out", v_out, "report CSV path");

  // ---- sweep / ablate / arch-stats ----
  auto* sweep = app.add_subcommand("sweep", "lambda_g sweep over seeds");
  auto* ablate = app.add_subcommand("ablate", "2x2 NAS x G-loss ablation grid");
  auto* stats = app.add_subcommand("arch-stats", "architecture stability across seeds");
  std::vector<double> sweep_lambdas{0.0, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0};
  std::vector<uint64_t> seeds{0, 1, 2};
  int jobs = 1;
  ConfigFlags sweep_flags, ablate_flags, stats_flags;
  for (auto& [sub, flags] : std::initializer_list<std::pair<CLI::App*, ConfigFlags*>>{
           {sweep, &sweep_flags}, {ablate, &ablate_flags}, {stats, &stats_flags}}) {
    sub->add_option("--config", cfg_path, "JSON config file");
    sub->add_option("--data", data_dir, "dataset directory")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seeds", seeds, "seed list")->delimiter(',');
    flags->attach(sub);
  }
  sweep->add_option("--lambdas", sweep_lambdas, "lambda_g values")->delimiter(',');
  sweep->add_option("--jobs", jobs, "concurrent pipelines");
  ablate->add_option("--jobs", jobs, "concurrent pipelines");

  // ---- report ----
  auto* report = app.add_subcommand("report", "re-aggregate saved run directories");
  std::vector<std::string> run_dirs;
  std::string report_out;
  report->add_option("--runs", run_dirs, "run directories")->required();
  report->add_option("--out", report_out, "aggregated CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const std::string out = resolve_out(gen_out, "dataset");
      const Benchmark bench = generate_benchmark(gen_cfg, gen_seed);
      save_benchmark(bench, out);
      std::printf("dataset written to %s (hash %s)\n", out.c_str(),
                  benchmark_hash(bench).c_str());
      return 0;
    }
    if (verify->parsed()) {
      const auto reports = dual::verify_batch(v_instances, v_nmax, v_tol, v_seed);
      if (!v_out.empty()) dual::write_report_csv(reports, v_out);
      double max_gap = 0.0;
      for (const auto& r : reports) max_gap = std::max(max_gap, r.gap_rel);
      const bool ok = dual::all_passed(reports);
      std::printf("%d instances, max relative gap %g: %s\n", v_instances, max_gap,
                  ok ? "ok" : "FAILED");
      return ok ? 0 : 1;
    }
    if (report->parsed()) {
      std::string csv = "run,domain,accuracy,reg_mse,detection_score\n";
      for (const std::string& dir : run_dirs) {
        const std::string table = read_file((fs::path(dir) / "metrics.csv").string());
        size_t pos = table.find('\n');
        if (pos == std::string::npos) throw ParseError("empty metrics table in " + dir);
        for (size_t start = pos + 1; start < table.size();) {
          size_t end = table.find('\n', start);
          if (end == std::string::npos) end = table.size();
          if (end > start)
            csv += fs::path(dir).filename().string() + "," + table.substr(start, end - start) +
                   "\n";
          start = end + 1;
        }
      }
      if (!report_out.empty())
        write_file(report_out, csv);
      else
        std::fputs(csv.c_str(), stdout);
      return 0;
    }

    // the remaining subcommands all need a dataset
    const Benchmark bench = load_benchmark(data_dir);

    if (search->parsed()) {
      const TrainConfig cfg = search_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "search");
      const SearchOutput so = search_stage(bench.source_train, cfg);
      fs::create_directories(out);
      write_file((fs::path(out) / "config.json").string(), train_config_to_text(cfg));
      write_file((fs::path(out) / "genotype.json").string(), genotype_to_text(so.genotype));
      write_file((fs::path(out) / "curves.csv").string(), curves_to_csv(so.curves));
      if (so.diverged) {
        std::fprintf(stderr, "search stage diverged\n");
        return 1;
      }
      std::printf("genotype written to %s\n", (fs::path(out) / "genotype.json").c_str());
      return 0;
    }
    if (augment->parsed()) {
      const TrainConfig cfg = augment_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "augment");
      const Genotype g = genotype_from_text(read_file(genotype_path));
      AugmentOutput ao = augment_stage(bench.source_train, g, cfg);
      fs::create_directories(out);
      write_file((fs::path(out) / "config.json").string(), train_config_to_text(cfg));
      write_file((fs::path(out) / "curves.csv").string(), curves_to_csv(ao.curves));
      if (ao.diverged) {
        std::fprintf(stderr, "augment stage diverged\n");
        return 1;
      }
      save_params(ao.model.params(), (fs::path(out) / "checkpoint.bin").string());
      eval_model(ao.model, bench, kDetectionTau, out);
      return 0;
    }
    if (pipeline->parsed()) {
      const TrainConfig cfg = pipeline_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "run");
      const RunReport rep = run_pipeline(cfg, bench, out);
      if (rep.diverged) {
        std::fprintf(stderr, "pipeline diverged; diagnostic report in %s\n", out.c_str());
        return 1;
      }
      std::printf("target-average detection %.4f; run directory %s\n",
                  rep.target_avg_detection, out.c_str());
      return 0;
    }
    if (eval->parsed()) {
      const TrainConfig cfg = load_config(cfg_path);
      const std::string out = resolve_out(out_dir, "eval");
      const Genotype g = genotype_from_text(read_file(genotype_path));
      DiscreteModel model = reconstruct(g, cfg.net(), cfg.seed);
      load_params(model.params(), checkpoint_path);
      const auto metrics = eval_model(model, bench, tau, out);
      for (const auto& m : metrics)
        std::printf("%s: accuracy %.4f detection %.4f\n", m.domain.c_str(), m.accuracy,
                    m.detection_score);
      return 0;
    }
    if (sweep->parsed()) {
      const TrainConfig cfg = sweep_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "sweep");
      const SweepReport rep = lambda_sweep(cfg, sweep_lambdas, seeds, bench, out, jobs);
      fs::create_directories(out);
      write_file((fs::path(out) / "sweep.csv").string(), sweep_to_csv(rep));
      std::fputs(sweep_to_csv(rep).c_str(), stdout);
      return 0;
    }
    if (ablate->parsed()) {
      const TrainConfig cfg = ablate_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "ablation");
      const AblationReport rep = ablation_grid(cfg, seeds, bench, out, jobs);
      fs::create_directories(out);
      write_file((fs::path(out) / "ablation.csv").string(), ablation_to_csv(rep));
      std::fputs(ablation_to_csv(rep).c_str(), stdout);
      return 0;
    }
    if (stats->parsed()) {
      const TrainConfig cfg = stats_flags.apply(load_config(cfg_path));
      cfg.validate();
      const std::string out = resolve_out(out_dir, "arch-stats");
      const OpFrequencyReport rep = arch_stability(cfg, seeds, bench);
      fs::create_directories(out);
      write_file((fs::path(out) / "op_frequency.csv").string(), op_frequency_to_csv(rep));
      for (size_t i = 0; i < rep.genotypes.size(); ++i)
        write_file((fs::path(out) / ("genotype_seed_" + std::to_string(rep.seeds[i]) + ".json"))
                       .string(),
                   genotype_to_text(rep.genotypes[i]));
      std::fputs(op_frequency_to_csv(rep).c_str(), stdout);
      return 0;
    }
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
