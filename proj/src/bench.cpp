#include "gnas/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <json.hpp>

namespace gnas {

namespace {

using json = nlohmann::ordered_json;

constexpr int kPatch = 3;
constexpr double kStripeHi = 1.0;
constexpr double kStripeLo = 0.1;
constexpr double kBgHigh = 0.8;
constexpr double kBgLow = 0.2;
constexpr double kBgJitter = 0.05;

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

// diagonal stripes for +1, anti-diagonal for -1
double stripe(double label, int r, int c) {
  const int m = label > 0 ? (r - c + kPatch) % kPatch : (r + c) % kPatch;
  return m == 0 ? kStripeHi : kStripeLo;
}

double center_to_target(int center, int grid) {
  // linear map of feasible centers [1, grid-2] onto [-0.8, 0.8]
  const double lo = 1.0, hi = grid - 2.0;
  return -0.8 + (center - lo) * 1.6 / (hi - lo);
}

Split generate_split(const GenConfig& cfg, const DomainSpec& dom, int n, Rng& rng) {
  const int G = cfg.grid;
  Split s;
  s.images = Tensor::zeros({n, 3, G, G});
  s.y1.resize(n);
  s.y2 = Tensor::zeros({n, 2});
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> pos(0, G - kPatch);
  std::uniform_real_distribution<double> uni01(0.0, 1.0);
  std::uniform_real_distribution<double> uni_bg(kBgLow, kBgHigh);
  std::normal_distribution<double> jitter(0.0, kBgJitter);

  const int64_t plane = static_cast<int64_t>(G) * G;
  for (int i = 0; i < n; ++i) {
    const double label = coin(rng) ? 1.0 : -1.0;
    const int ty = pos(rng), tx = pos(rng);
    double* img = s.images.data() + static_cast<int64_t>(i) * 3 * plane;

    // channel 0: the hard causal feature (stripe-patterned patch)
    for (int r = 0; r < kPatch; ++r)
      for (int c = 0; c < kPatch; ++c)
        img[(ty + r) * G + (tx + c)] = stripe(label, r, c);

    // channel 1: the easy background level
    double level;
    switch (dom.rule) {
      case BackgroundRule::Correlated:
        level = clip01((label > 0 ? kBgHigh : kBgLow) + jitter(rng));
        break;
      case BackgroundRule::Decorrelated:
        level = uni_bg(rng);
        break;
      case BackgroundRule::Flipped:
        level = clip01((label > 0 ? kBgLow : kBgHigh) + jitter(rng));
        break;
      default:
        throw ContractViolation("bad background rule");
    }
    std::fill_n(img + plane, plane, level);

    // channel 2: pure noise
    for (int64_t px = 0; px < plane; ++px) img[2 * plane + px] = uni01(rng);

    if (dom.brightness_offset != 0.0)
      for (int64_t px = 0; px < 3 * plane; ++px) img[px] += dom.brightness_offset;
    if (dom.pixel_noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, dom.pixel_noise_sigma);
      for (int64_t px = 0; px < 3 * plane; ++px) img[px] += noise(rng);
    }
    for (int64_t px = 0; px < 3 * plane; ++px) img[px] = clip01(img[px]);

    s.y1[i] = label;
    s.y2.v[2 * i] = center_to_target(ty + 1, G);
    s.y2.v[2 * i + 1] = center_to_target(tx + 1, G);
  }
  return s;
}

std::string serialize_split(const Split& s) {
  std::string out = "GNBM";
  auto put_u32 = [&](uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put_u32(static_cast<uint32_t>(s.size()));
  put_u32(3);
  put_u32(static_cast<uint32_t>(s.images.shape[2]));
  put_u32(static_cast<uint32_t>(s.images.shape[3]));
  out.append(reinterpret_cast<const char*>(s.images.v.data()), s.images.v.size() * sizeof(double));
  out.append(reinterpret_cast<const char*>(s.y1.data()), s.y1.size() * sizeof(double));
  out.append(reinterpret_cast<const char*>(s.y2.v.data()), s.y2.v.size() * sizeof(double));
  return out;
}

Split deserialize_split(const std::string& s) {
  if (s.size() < 20 || s.compare(0, 4, "GNBM") != 0) throw ParseError("split file: bad magic");
  size_t off = 4;
  auto get_u32 = [&]() {
    uint32_t v;
    std::memcpy(&v, s.data() + off, 4);
    off += 4;
    return v;
  };
  const int n = static_cast<int>(get_u32());
  const int c = static_cast<int>(get_u32());
  const int h = static_cast<int>(get_u32());
  const int w = static_cast<int>(get_u32());
  if (c != 3) throw ParseError("split file: expected 3 channels");
  Split out;
  out.images = Tensor::zeros({n, c, h, w});
  out.y1.resize(n);
  out.y2 = Tensor::zeros({n, 2});
  const size_t need = off + (out.images.v.size() + out.y1.size() + out.y2.v.size()) * sizeof(double);
  if (s.size() != need) throw ParseError("split file: size mismatch");
  std::memcpy(out.images.v.data(), s.data() + off, out.images.v.size() * sizeof(double));
  off += out.images.v.size() * sizeof(double);
  std::memcpy(out.y1.data(), s.data() + off, out.y1.size() * sizeof(double));
  off += out.y1.size() * sizeof(double);
  std::memcpy(out.y2.v.data(), s.data() + off, out.y2.v.size() * sizeof(double));
  return out;
}

const char* rule_name(BackgroundRule r) {
  switch (r) {
    case BackgroundRule::Correlated:
      return "correlated";
    case BackgroundRule::Decorrelated:
      return "decorrelated";
    case BackgroundRule::Flipped:
      return "flipped";
  }
  return "?";
}

BackgroundRule rule_from_name(const std::string& s) {
  if (s == "correlated") return BackgroundRule::Correlated;
  if (s == "decorrelated") return BackgroundRule::Decorrelated;
  if (s == "flipped") return BackgroundRule::Flipped;
  throw ParseError("unknown background rule '" + s + "'");
}

}  // namespace

void Split::gather(const std::vector<int>& idx, Tensor& images_out, std::vector<double>& y1_out,
                   Tensor& y2_out) const {
  const int n = static_cast<int>(idx.size());
  const int64_t ex = images.v.size() / size();
  images_out = Tensor::zeros({n, images.shape[1], images.shape[2], images.shape[3]});
  y1_out.resize(n);
  y2_out = Tensor::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    const int j = idx[i];
    std::copy_n(images.v.data() + j * ex, ex, images_out.v.data() + i * ex);
    y1_out[i] = y1[j];
    y2_out.v[2 * i] = y2.v[2 * j];
    y2_out.v[2 * i + 1] = y2.v[2 * j + 1];
  }
}

std::vector<DomainSpec> default_targets() {
  return {
      {"T1", BackgroundRule::Decorrelated, 0.0, 0.0},
      {"T2", BackgroundRule::Flipped, 0.0, 0.0},
      {"T3", BackgroundRule::Decorrelated, -0.3, 0.0},
      {"T4", BackgroundRule::Flipped, 0.0, 0.1},
  };
}

Benchmark generate_benchmark(const GenConfig& cfg, uint64_t seed) {
  GNAS_CHECK(cfg.grid >= kPatch, "generate_benchmark: patch cannot fit the grid");
  GNAS_CHECK(cfg.n_source_train >= 1 && cfg.n_source_test >= 1 && cfg.n_target >= 1,
             "generate_benchmark: split sizes must be >= 1");
  Benchmark b;
  b.seed = seed;
  b.version = kGeneratorVersion;
  b.config = cfg;
  const DomainSpec source{"source", BackgroundRule::Correlated, 0.0, 0.0};
  {
    Rng rng = make_rng(seed, 10);
    b.source_train = generate_split(cfg, source, cfg.n_source_train, rng);
  }
  {
    Rng rng = make_rng(seed, 11);
    b.source_test = generate_split(cfg, source, cfg.n_source_test, rng);
  }
  uint64_t stream = 12;
  for (const DomainSpec& dom : default_targets()) {
    Rng rng = make_rng(seed, stream++);
    b.targets.emplace_back(dom, generate_split(cfg, dom, cfg.n_target, rng));
  }
  return b;
}

std::string split_sha256(const Split& s) { return sha256_hex(serialize_split(s)); }

void save_benchmark(const Benchmark& b, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["generator_version"] = b.version;
  manifest["seed"] = b.seed;
  manifest["config"] = json{{"n_source_train", b.config.n_source_train},
                            {"n_source_test", b.config.n_source_test},
                            {"n_target", b.config.n_target},
                            {"grid", b.config.grid}};
  json splits = json::object();
  auto emit = [&](const std::string& name, const Split& s, const DomainSpec* dom) {
    const std::string file = name + ".bin";
    const std::string blob = serialize_split(s);
    write_file((fs::path(dir) / file).string(), blob);
    json entry{{"file", file}, {"sha256", sha256_hex(blob)}, {"n", s.size()}};
    if (dom) {
      entry["rule"] = rule_name(dom->rule);
      entry["brightness_offset"] = dom->brightness_offset;
      entry["pixel_noise_sigma"] = dom->pixel_noise_sigma;
    }
    splits[name] = entry;
  };
  emit("source_train", b.source_train, nullptr);
  emit("source_test", b.source_test, nullptr);
  for (const auto& [dom, split] : b.targets) emit(dom.name, split, &dom);
  manifest["splits"] = splits;
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Benchmark load_benchmark(const std::string& dir) {
  namespace fs = std::filesystem;
  json manifest;
  try {
    manifest = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest parse: ") + e.what());
  }
  Benchmark b;
  b.version = manifest.at("generator_version").get<std::string>();
  b.seed = manifest.at("seed").get<uint64_t>();
  const auto& cfg = manifest.at("config");
  b.config.n_source_train = cfg.at("n_source_train").get<int>();
  b.config.n_source_test = cfg.at("n_source_test").get<int>();
  b.config.n_target = cfg.at("n_target").get<int>();
  b.config.grid = cfg.at("grid").get<int>();
  const auto& splits = manifest.at("splits");
  auto load = [&](const std::string& name) {
    const auto& entry = splits.at(name);
    const std::string blob = read_file((fs::path(dir) / entry.at("file").get<std::string>()).string());
    if (sha256_hex(blob) != entry.at("sha256").get<std::string>())
      throw ParseError("split checksum mismatch: " + name);
    return deserialize_split(blob);
  };
  b.source_train = load("source_train");
  b.source_test = load("source_test");
  for (auto it = splits.begin(); it != splits.end(); ++it) {
    if (it.key() == "source_train" || it.key() == "source_test") continue;
    DomainSpec dom;
    dom.name = it.key();
    dom.rule = rule_from_name(it.value().at("rule").get<std::string>());
    dom.brightness_offset = it.value().at("brightness_offset").get<double>();
    dom.pixel_noise_sigma = it.value().at("pixel_noise_sigma").get<double>();
    b.targets.emplace_back(dom, load(it.key()));
  }
  return b;
}

std::string benchmark_hash(const Benchmark& b) {
  std::string acc = b.version + "|" + std::to_string(b.seed);
  acc += "|" + split_sha256(b.source_train) + "|" + split_sha256(b.source_test);
  for (const auto& [dom, split] : b.targets) acc += "|" + dom.name + ":" + split_sha256(split);
  return sha256_hex(acc);
}

BatchSampler::BatchSampler(int n, int batch_size, uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  GNAS_CHECK(n >= 1 && batch_size >= 1, "BatchSampler: bad sizes");
  GNAS_CHECK(batch_size <= n, "BatchSampler: batch size exceeds split size");
  start_epoch(0);
}

void BatchSampler::start_epoch(int epoch) {
  perm_.resize(n_);
  std::iota(perm_.begin(), perm_.end(), 0);
  Rng rng = make_rng(seed_, 0x5a5a0000ULL + static_cast<uint64_t>(epoch));
  std::shuffle(perm_.begin(), perm_.end(), rng);
  cursor_ = 0;
}

bool BatchSampler::next(std::vector<int>& indices) {
  if (cursor_ >= n_) return false;
  const int take = std::min(batch_size_, n_ - cursor_);
  indices.assign(perm_.begin() + cursor_, perm_.begin() + cursor_ + take);
  cursor_ += take;
  return true;
}

int BatchSampler::batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

namespace {

double mean_channel(const Split& s, int i, int channel) {
  const int64_t plane =
      static_cast<int64_t>(s.images.shape[2]) * s.images.shape[3];
  const double* p = s.images.v.data() + (static_cast<int64_t>(i) * 3 + channel) * plane;
  double acc = 0.0;
  for (int64_t k = 0; k < plane; ++k) acc += p[k];
  return acc / static_cast<double>(plane);
}

// brightest 3x3 window (first occurrence on ties), returns top-left
std::pair<int, int> brightest_patch(const Split& s, int i) {
  const int G = s.images.shape[2];
  const int64_t plane = static_cast<int64_t>(G) * G;
  const double* ch0 = s.images.v.data() + static_cast<int64_t>(i) * 3 * plane;
  double best = -1.0;
  std::pair<int, int> at{0, 0};
  for (int y = 0; y + kPatch <= G; ++y)
    for (int x = 0; x + kPatch <= G; ++x) {
      double acc = 0.0;
      for (int r = 0; r < kPatch; ++r)
        for (int c = 0; c < kPatch; ++c) acc += ch0[(y + r) * G + (x + c)];
      if (acc > best) {
        best = acc;
        at = {y, x};
      }
    }
  return at;
}

}  // namespace

double background_label_correlation(const Split& s) {
  const int n = s.size();
  GNAS_CHECK(n >= 2, "correlation: need at least 2 examples");
  double mx = 0.0, my = 0.0;
  std::vector<double> lv(n);
  for (int i = 0; i < n; ++i) {
    lv[i] = mean_channel(s, i, 1);
    mx += lv[i];
    my += s.y1[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (lv[i] - mx) * (s.y1[i] - my);
    sxx += (lv[i] - mx) * (lv[i] - mx);
    syy += (s.y1[i] - my) * (s.y1[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double easy_threshold_accuracy(const Split& s, double threshold) {
  int correct = 0;
  for (int i = 0; i < s.size(); ++i) {
    const double pred = mean_channel(s, i, 1) > threshold ? 1.0 : -1.0;
    if (pred == s.y1[i]) ++correct;
  }
  return static_cast<double>(correct) / s.size();
}

double hard_oracle_accuracy(const Split& s) {
  const int G = s.images.shape[2];
  const int64_t plane = static_cast<int64_t>(G) * G;
  int correct = 0;
  for (int i = 0; i < s.size(); ++i) {
    auto [y, x] = brightest_patch(s, i);
    const double* ch0 = s.images.v.data() + static_cast<int64_t>(i) * 3 * plane;
    double patch[kPatch * kPatch];
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < kPatch; ++r)
      for (int c = 0; c < kPatch; ++c) {
        patch[r * kPatch + c] = ch0[(y + r) * G + (x + c)];
        lo = std::min(lo, patch[r * kPatch + c]);
        hi = std::max(hi, patch[r * kPatch + c]);
      }
    const double range = hi > lo ? hi - lo : 1.0;
    double dist[2] = {0.0, 0.0};  // to +1 and -1 centroids
    for (int r = 0; r < kPatch; ++r)
      for (int c = 0; c < kPatch; ++c) {
        const double v = (patch[r * kPatch + c] - lo) / range;
        const double pos = (r - c + kPatch) % kPatch == 0 ? 1.0 : 0.0;
        const double neg = (r + c) % kPatch == 0 ? 1.0 : 0.0;
        dist[0] += (v - pos) * (v - pos);
        dist[1] += (v - neg) * (v - neg);
      }
    const double pred = dist[0] <= dist[1] ? 1.0 : -1.0;
    if (pred == s.y1[i]) ++correct;
  }
  return static_cast<double>(correct) / s.size();
}

std::array<double, 2> localize_patch(const Tensor& images, int index) {
  Split view;  // lightweight adaptor over one image batch
  view.images = images;
  view.y1.assign(images.shape[0], 1.0);
  view.y2 = Tensor::zeros({images.shape[0], 2});
  auto [y, x] = brightest_patch(view, index);
  const int G = images.shape[2];
  return {center_to_target(y + 1, G), center_to_target(x + 1, G)};
}

}  // namespace gnas
