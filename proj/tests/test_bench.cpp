#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gnas/bench.hpp"
#include "gnas/util.hpp"

using namespace gnas;

namespace {

const Benchmark& bench() {
  static Benchmark b = generate_benchmark(GenConfig{}, 0);
  return b;
}

const Split& target(const std::string& name) {
  for (const auto& [spec, split] : bench().targets)
    if (spec.name == name) return split;
  throw ContractViolation("no such target: " + name);
}

double mean_ch1(const Split& s, int i) {
  const int hw = s.images.shape[2] * s.images.shape[3];
  const double* px = s.images.v.data() + (static_cast<size_t>(i) * 3 + 1) * hw;
  double m = 0.0;
  for (int j = 0; j < hw; ++j) m += px[j];
  return m / hw;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const Benchmark a = generate_benchmark(GenConfig{}, 7);
  const Benchmark b = generate_benchmark(GenConfig{}, 7);
  const Benchmark c = generate_benchmark(GenConfig{}, 8);
  CHECK(benchmark_hash(a) == benchmark_hash(b));
  CHECK(benchmark_hash(a) != benchmark_hash(c));
  CHECK(split_sha256(a.source_train) == split_sha256(b.source_train));
  CHECK(split_sha256(a.source_train) != split_sha256(a.source_test));
}

TEST_CASE("split shapes, ranges, and label balance") {
  const Benchmark& b = bench();
  CHECK(b.version == kGeneratorVersion);
  CHECK(b.source_train.size() == 2000);
  CHECK(b.source_test.size() == 500);
  REQUIRE(b.targets.size() == 4);
  for (const auto& [spec, split] : b.targets) CHECK(split.size() == 500);

  CHECK(b.source_train.images.shape == std::vector<int>{2000, 3, 8, 8});
  for (double v : b.source_train.images.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : b.source_train.y2.v) {
    CHECK(v >= -0.8);
    CHECK(v <= 0.8);
  }
  int pos = 0;
  for (double y : b.source_train.y1) {
    CHECK(std::fabs(y) == 1.0);
    pos += y > 0;
  }
  // labels drawn uniformly; a 10-sigma band around n/2
  CHECK(std::abs(pos - 1000) < 250);
}

TEST_CASE("background correlation follows the domain rule") {
  CHECK(background_label_correlation(bench().source_train) > 0.9);
  CHECK(background_label_correlation(bench().source_test) > 0.9);
  CHECK(std::fabs(background_label_correlation(target("T1"))) < 0.1);
  // T3 shares T1's rule; wider band since brightness clipping plus n=500
  // leaves more sampling noise
  CHECK(std::fabs(background_label_correlation(target("T3"))) < 0.2);
  CHECK(background_label_correlation(target("T2")) < -0.9);
}

TEST_CASE("easy feature is predictive on source and anti-predictive when flipped") {
  CHECK(easy_threshold_accuracy(bench().source_train) > 0.95);
  CHECK(easy_threshold_accuracy(bench().source_test) > 0.95);
  CHECK(easy_threshold_accuracy(target("T2")) < 0.10);
  // the threshold oracle really is reading channel 1
  const Split& s = bench().source_test;
  int agree = 0;
  for (int i = 0; i < s.size(); ++i) {
    const double pred = mean_ch1(s, i) > 0.5 ? 1.0 : -1.0;
    agree += pred == s.y1[i];
  }
  CHECK(static_cast<double>(agree) / s.size() == doctest::Approx(easy_threshold_accuracy(s)));
}

TEST_CASE("hard oracle generalizes to every domain") {
  CHECK(hard_oracle_accuracy(bench().source_train) > 0.95);
  CHECK(hard_oracle_accuracy(bench().source_test) > 0.95);
  for (const auto& [spec, split] : bench().targets) {
    CAPTURE(spec.name);
    CHECK(hard_oracle_accuracy(split) > 0.95);
  }
}

TEST_CASE("patch localization recovers the regression target") {
  const Split& s = bench().source_test;
  for (int i = 0; i < 100; ++i) {
    const auto pred = localize_patch(s.images, i);
    CHECK(std::fabs(pred[0] - s.y2.v[2 * i]) < 1e-9);
    CHECK(std::fabs(pred[1] - s.y2.v[2 * i + 1]) < 1e-9);
  }
  // noisy flipped target: localization still lands on the right cell
  const Split& t4 = target("T4");
  int hits = 0;
  for (int i = 0; i < t4.size(); ++i) {
    const auto pred = localize_patch(t4.images, i);
    const double d = std::max(std::fabs(pred[0] - t4.y2.v[2 * i]),
                              std::fabs(pred[1] - t4.y2.v[2 * i + 1]));
    hits += d < 1e-9;
  }
  CHECK(hits > 0.9 * t4.size());
}

TEST_CASE("brightness offset shifts T3 below T1") {
  double m1 = 0.0, m3 = 0.0;
  const Split& t1 = target("T1");
  const Split& t3 = target("T3");
  for (int i = 0; i < t1.size(); ++i) m1 += mean_ch1(t1, i);
  for (int i = 0; i < t3.size(); ++i) m3 += mean_ch1(t3, i);
  CHECK(m3 / t3.size() < m1 / t1.size() - 0.2);
}

TEST_CASE("batch sampler covers each epoch exactly once") {
  BatchSampler sampler(2000, 32, 3);
  CHECK(sampler.batches_per_epoch() == 63);
  for (int epoch = 0; epoch < 2; ++epoch) {
    sampler.start_epoch(epoch);
    std::vector<int> idx;
    std::set<int> seen;
    int batches = 0, last = -1;
    while (sampler.next(idx)) {
      ++batches;
      last = static_cast<int>(idx.size());
      for (int i : idx) {
        CHECK(i >= 0);
        CHECK(i < 2000);
        CHECK(seen.insert(i).second);  // no repeats within an epoch
      }
    }
    CHECK(batches == 63);
    CHECK(last == 16);
    CHECK(seen.size() == 2000);
  }

  // epochs reshuffle deterministically
  BatchSampler s2(2000, 32, 3);
  s2.start_epoch(0);
  std::vector<int> a, b;
  s2.next(a);
  sampler.start_epoch(0);
  sampler.next(b);
  CHECK(a == b);
  sampler.start_epoch(1);
  sampler.next(b);
  CHECK(a != b);
}

TEST_CASE("gather pulls matched rows") {
  const Split& s = bench().source_test;
  Tensor imgs, y2;
  std::vector<double> y1;
  s.gather({5, 0, 17}, imgs, y1, y2);
  CHECK(imgs.shape == std::vector<int>{3, 3, 8, 8});
  CHECK(y1 == std::vector<double>{s.y1[5], s.y1[0], s.y1[17]});
  const size_t img_sz = 3 * 8 * 8;
  for (size_t j = 0; j < img_sz; ++j)
    CHECK(imgs.v[img_sz + j] == s.images.v[j]);  // row 1 came from index 0
  CHECK(y2.v[0] == s.y2.v[10]);
  CHECK(y2.v[1] == s.y2.v[11]);
}

TEST_CASE("dataset save/load round trip and tamper rejection") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gnas_test_ds";
  fs::remove_all(dir);
  const Benchmark b = generate_benchmark(GenConfig{200, 50, 50, 8}, 9);
  save_benchmark(b, dir.string());
  const Benchmark back = load_benchmark(dir.string());
  CHECK(benchmark_hash(back) == benchmark_hash(b));
  CHECK(back.seed == b.seed);
  CHECK(back.source_train.images.v == b.source_train.images.v);
  CHECK(back.source_train.y1 == b.source_train.y1);
  REQUIRE(back.targets.size() == b.targets.size());
  for (size_t i = 0; i < b.targets.size(); ++i) {
    CHECK(back.targets[i].first.name == b.targets[i].first.name);
    CHECK(back.targets[i].second.images.v == b.targets[i].second.images.v);
  }

  // flip one byte in a split file: the checksum check must fire
  fs::path victim;
  for (const auto& ent : fs::directory_iterator(dir))
    if (ent.path().extension() == ".bin") {
      victim = ent.path();
      break;
    }
  REQUIRE(!victim.empty());
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(64);
    char c;
    f.seekg(64);
    f.get(c);
    f.seekp(64);
    f.put(static_cast<char>(c ^ 0x1));
  }
  CHECK_THROWS(load_benchmark(dir.string()));
  fs::remove_all(dir);
}
