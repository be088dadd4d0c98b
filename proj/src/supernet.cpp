#include "gnas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

namespace gnas {

namespace {

using json = nlohmann::ordered_json;

std::string edge_prefix(const char* cell, int e) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "head.%s.e%02d", cell, e);
  return buf;
}

std::string arch_name(const char* cell, int e) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "arch.%s.e%02d", cell, e);
  return buf;
}

void add_trunk_params(ParamStore& p, const NetConfig& cfg, Rng& rng) {
  const int C = cfg.channels;
  const double s1 = 1.0 / std::sqrt(3.0 * 9.0);
  const double s2 = 1.0 / std::sqrt(C * 9.0);
  const double ss = 1.0 / std::sqrt(static_cast<double>(C));
  p.add("backbone.conv1.w", Group::Backbone, Tensor::uniform({C, 3, 3, 3}, -s1, s1, rng));
  p.add("backbone.conv2.w", Group::Backbone, Tensor::uniform({C, C, 3, 3}, -s2, s2, rng));
  p.add("head.stem.w", Group::Head, Tensor::uniform({C, C, 1, 1}, -ss, ss, rng));
}

void add_head_params(ParamStore& p, const NetConfig& cfg, Rng& rng) {
  const int C = cfg.channels;
  const int F = cfg.p * C;
  const double sp = 1.0 / std::sqrt(static_cast<double>(F));
  p.add("head.proj.w", Group::Head, Tensor::uniform({C, F, 1, 1}, -sp, sp, rng));
  p.add("head.cls.w", Group::Head, Tensor::uniform({1, F}, -sp, sp, rng));
  p.add("head.cls.b", Group::Head, Tensor::zeros({1}));
  p.add("head.reg.w", Group::Head, Tensor::uniform({2, F}, -sp, sp, rng));
  p.add("head.reg.b", Group::Head, Tensor::zeros({2}));
}

Tensor standardize(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.v) v = 2.0 * v - 1.0;  // [0,1] -> [-1,1]
  return out;
}

// trunk: standardized input -> backbone -> stem
VarId trunk_forward(Tape& tape, const Tensor& x, const ParamBinding& bind) {
  GNAS_CHECK(x.shape.size() == 4 && x.shape[1] == 3, "forward: input must be [N,3,H,W]");
  VarId in = tape.constant(standardize(x));
  VarId h = tape.relu(tape.conv2d(in, bind.at("backbone.conv1.w"), 1, 1, 1));
  VarId z = tape.relu(tape.conv2d(h, bind.at("backbone.conv2.w"), 1, 1, 1));
  return tape.conv2d(z, bind.at("head.stem.w"), 1, 1, 1);
}

Prediction heads_forward(Tape& tape, VarId reduction_out, const ParamBinding& bind, int batch) {
  VarId f = tape.global_avg_pool(reduction_out);
  VarId y1m = tape.linear(f, bind.at("head.cls.w"), bind.at("head.cls.b"));
  VarId y1 = tape.reshape(y1m, {batch});
  VarId y2 = tape.linear(f, bind.at("head.reg.w"), bind.at("head.reg.b"));
  return {y1, y2, f};
}

Tensor softmax_plain(const Tensor& logits) {
  Tensor out(logits.shape);
  double mx = *std::max_element(logits.v.begin(), logits.v.end());
  double z = 0.0;
  for (size_t i = 0; i < logits.v.size(); ++i) {
    out.v[i] = std::exp(logits.v[i] - mx);
    z += out.v[i];
  }
  for (double& v : out.v) v /= z;
  return out;
}

std::vector<Genotype::NodeChoice> discretize_cell(const CellSpec& spec,
                                                  const std::vector<Tensor>& alphas) {
  GNAS_CHECK(alphas.size() == spec.edges.size(), "discretize: alpha count mismatch");
  std::vector<Genotype::NodeChoice> out;
  for (int j = 0; j < spec.p; ++j) {
    const int to = 2 + j;
    struct Cand {
      int from;
      int op;
      double strength;
    };
    std::vector<Cand> cands;
    for (int e = 0; e < spec.edge_count(); ++e) {
      if (spec.edges[e].to != to) continue;
      const auto& a = alphas[e].v;
      int best = 0;
      for (int k = 1; k < kNumOps; ++k)
        if (a[k] > a[best]) best = k;  // tie keeps the lower op index
      cands.push_back({spec.edges[e].from, best, a[best]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) {
      if (l.strength != r.strength) return l.strength > r.strength;
      if (l.op != r.op) return l.op < r.op;
      return l.from < r.from;
    });
    const int keep = std::min<int>(2, static_cast<int>(cands.size()));
    cands.resize(keep);
    std::sort(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) { return l.from < r.from; });
    Genotype::NodeChoice nc{j, {}};
    for (const Cand& c : cands) nc.edges.push_back({c.from, static_cast<OpKind>(c.op)});
    out.push_back(std::move(nc));
  }
  return out;
}

json cell_to_json(const std::vector<Genotype::NodeChoice>& cell) {
  json arr = json::array();
  for (const auto& nc : cell) {
    json edges = json::array();
    for (const auto& e : nc.edges)
      edges.push_back(json{{"from", e.from}, {"op", std::string(op_name(e.op))}});
    arr.push_back(json{{"node", nc.node}, {"edges", edges}});
  }
  return arr;
}

std::vector<Genotype::NodeChoice> cell_from_json(const json& arr, const char* cell_name) {
  if (!arr.is_array()) throw ParseError(std::string("cells.") + cell_name + " must be an array");
  std::vector<Genotype::NodeChoice> out;
  for (const auto& nj : arr) {
    if (!nj.contains("node")) throw ParseError("missing field 'node' in cell entry");
    if (!nj.contains("edges")) throw ParseError("missing field 'edges' in cell entry");
    Genotype::NodeChoice nc{nj.at("node").get<int>(), {}};
    for (const auto& ej : nj.at("edges")) {
      if (!ej.contains("from")) throw ParseError("missing field 'from' in edge entry");
      if (!ej.contains("op")) throw ParseError("missing field 'op' in edge entry");
      const std::string opn = ej.at("op").get<std::string>();
      auto op = op_from_name(opn);
      if (!op) throw ParseError("unknown operation '" + opn + "'");
      nc.edges.push_back({ej.at("from").get<int>(), *op});
    }
    out.push_back(std::move(nc));
  }
  return out;
}

}  // namespace

Genotype discretize_alphas(const CellSpec& normal_spec, const std::vector<Tensor>& normal_alphas,
                           const CellSpec& reduction_spec,
                           const std::vector<Tensor>& reduction_alphas) {
  Genotype g;
  g.p = normal_spec.p;
  g.normal = discretize_cell(normal_spec, normal_alphas);
  g.reduction = discretize_cell(reduction_spec, reduction_alphas);
  validate_genotype(g);
  return g;
}

void validate_genotype(const Genotype& g) {
  GNAS_CHECK(g.p >= 1, "genotype: p must be >= 1");
  for (const auto* cell : {&g.normal, &g.reduction}) {
    GNAS_CHECK(static_cast<int>(cell->size()) == g.p, "genotype: node count mismatch");
    for (int j = 0; j < g.p; ++j) {
      const auto& nc = (*cell)[j];
      GNAS_CHECK(nc.node == j, "genotype: node entries must be 0..p-1 in order");
      GNAS_CHECK(static_cast<int>(nc.edges.size()) == 2, "genotype: exactly 2 retained edges per node");
      int prev = -1;
      for (const auto& e : nc.edges) {
        GNAS_CHECK(e.from >= 0 && e.from < j + 2, "genotype: edge source out of range");
        GNAS_CHECK(e.from > prev, "genotype: edge sources must be distinct ascending");
        prev = e.from;
      }
    }
  }
}

std::string genotype_to_text(const Genotype& g) {
  json doc;
  doc["version"] = 1;
  doc["cells"] = json{{"normal", cell_to_json(g.normal)}, {"reduction", cell_to_json(g.reduction)}};
  return doc.dump(2) + "\n";
}

Genotype genotype_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("genotype parse: ") + e.what());
  }
  try {
    if (!doc.contains("version")) throw ParseError("missing field 'version'");
    if (doc.at("version").get<int>() != 1) throw ParseError("unsupported genotype version");
    if (!doc.contains("cells")) throw ParseError("missing field 'cells'");
    const auto& cells = doc.at("cells");
    if (!cells.contains("normal")) throw ParseError("missing field 'cells.normal'");
    if (!cells.contains("reduction")) throw ParseError("missing field 'cells.reduction'");
    Genotype g;
    g.normal = cell_from_json(cells.at("normal"), "normal");
    g.reduction = cell_from_json(cells.at("reduction"), "reduction");
    g.p = static_cast<int>(g.normal.size());
    try {
      validate_genotype(g);
    } catch (const ContractViolation& e) {
      throw ParseError(e.what());
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("genotype parse: ") + e.what());
  }
}

SupernetModel::SupernetModel(NetConfig cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng = make_rng(seed, 1);
  normal_spec_ = CellSpec::make(CellKind::Normal, cfg.p, cfg.channels);
  reduction_spec_ = CellSpec::make(CellKind::Reduction, cfg.p, cfg.channels);
  add_trunk_params(params_, cfg_, rng);
  for (const CellSpec* spec : {&normal_spec_, &reduction_spec_}) {
    const char* cn = spec->kind == CellKind::Normal ? "normal" : "reduction";
    auto& ops = spec->kind == CellKind::Normal ? normal_ops_ : reduction_ops_;
    for (int e = 0; e < spec->edge_count(); ++e) {
      std::array<Operation, kNumOps> edge{};
      for (int k = 0; k < kNumOps; ++k) {
        const auto kind = static_cast<OpKind>(k);
        edge[k] = build_operation(kind, cfg.channels, spec->edges[e].stride,
                                  edge_prefix(cn, e) + "." + std::string(op_name(kind)),
                                  params_, rng);
      }
      ops.push_back(edge);
    }
  }
  add_head_params(params_, cfg_, rng);
  // near-zero logits start the search at the uniform mixture
  for (const CellSpec* spec : {&normal_spec_, &reduction_spec_}) {
    const char* cn = spec->kind == CellKind::Normal ? "normal" : "reduction";
    for (int e = 0; e < spec->edge_count(); ++e)
      params_.add(arch_name(cn, e), Group::Arch, Tensor::gaussian({kNumOps}, 1e-3, rng));
  }
}

Prediction SupernetModel::forward(Tape& tape, const Tensor& x, const ParamBinding& bind,
                                  const std::vector<Tensor>* alpha_override,
                                  const std::vector<double>* edge_mask) const {
  const int ne_n = normal_spec_.edge_count();
  const int ne_r = reduction_spec_.edge_count();
  if (alpha_override)
    GNAS_CHECK(static_cast<int>(alpha_override->size()) == ne_n + ne_r,
               "forward: alpha override count mismatch");
  if (edge_mask)
    GNAS_CHECK(static_cast<int>(edge_mask->size()) == ne_n + ne_r,
               "forward: edge mask count mismatch");

  VarId stem = trunk_forward(tape, x, bind);

  auto cell_alphas = [&](const char* cn, int base, int count) {
    std::vector<VarId> out;
    for (int e = 0; e < count; ++e)
      out.push_back(alpha_override ? tape.constant((*alpha_override)[base + e])
                                   : tape.softmax(bind.at(arch_name(cn, e))));
    return out;
  };
  std::vector<double> mask_n, mask_r;
  if (edge_mask) {
    mask_n.assign(edge_mask->begin(), edge_mask->begin() + ne_n);
    mask_r.assign(edge_mask->begin() + ne_n, edge_mask->end());
  }

  VarId n_out = cell_forward(tape, normal_spec_, normal_ops_, {stem, stem},
                             cell_alphas("normal", 0, ne_n), bind,
                             edge_mask ? &mask_n : nullptr);
  VarId r_in = tape.conv2d(n_out, bind.at("head.proj.w"), 1, 1, 1);
  VarId r_out = cell_forward(tape, reduction_spec_, reduction_ops_, {r_in, r_in},
                             cell_alphas("reduction", ne_n, ne_r), bind,
                             edge_mask ? &mask_r : nullptr);
  return heads_forward(tape, r_out, bind, x.shape[0]);
}

std::vector<Tensor> SupernetModel::alphas() const {
  std::vector<Tensor> out;
  for (const CellSpec* spec : {&normal_spec_, &reduction_spec_}) {
    const char* cn = spec->kind == CellKind::Normal ? "normal" : "reduction";
    for (int e = 0; e < spec->edge_count(); ++e)
      out.push_back(softmax_plain(params_.at(arch_name(cn, e))));
  }
  return out;
}

Genotype SupernetModel::discretize() const {
  std::vector<Tensor> a = alphas();
  const int ne_n = normal_spec_.edge_count();
  std::vector<Tensor> an(a.begin(), a.begin() + ne_n);
  std::vector<Tensor> ar(a.begin() + ne_n, a.end());
  return discretize_alphas(normal_spec_, an, reduction_spec_, ar);
}

std::pair<std::vector<Tensor>, std::vector<double>> SupernetModel::onehot_for(
    const Genotype& g) const {
  validate_genotype(g);
  GNAS_CHECK(g.p == cfg_.p, "onehot_for: node count mismatch");
  const int ne_n = normal_spec_.edge_count();
  const int ne_r = reduction_spec_.edge_count();
  std::vector<Tensor> alphas(ne_n + ne_r, Tensor::zeros({kNumOps}));
  std::vector<double> mask(ne_n + ne_r, 0.0);
  auto fill = [&](const CellSpec& spec, const std::vector<Genotype::NodeChoice>& cell, int base) {
    for (const auto& nc : cell)
      for (const auto& e : nc.edges) {
        const int idx = base + spec.edge_index(e.from, nc.node + 2);
        alphas[idx].v[static_cast<int>(e.op)] = 1.0;
        mask[idx] = 1.0;
      }
  };
  fill(normal_spec_, g.normal, 0);
  fill(reduction_spec_, g.reduction, ne_n);
  return {std::move(alphas), std::move(mask)};
}

DiscreteModel::DiscreteModel(Genotype g, NetConfig cfg, uint64_t seed)
    : cfg_(cfg), geno_(std::move(g)) {
  validate_genotype(geno_);
  GNAS_CHECK(geno_.p == cfg.p, "reconstruct: genotype/dims mismatch");
  Rng rng = make_rng(seed, 2);
  add_trunk_params(params_, cfg_, rng);
  const CellSpec nspec = CellSpec::make(CellKind::Normal, cfg.p, cfg.channels);
  const CellSpec rspec = CellSpec::make(CellKind::Reduction, cfg.p, cfg.channels);
  auto build_cell = [&](const CellSpec& spec, const std::vector<Genotype::NodeChoice>& cell,
                        const char* cn) {
    std::vector<std::vector<DiscreteEdge>> nodes;
    for (const auto& nc : cell) {
      std::vector<DiscreteEdge> edges;
      for (const auto& e : nc.edges) {
        const int idx = spec.edge_index(e.from, nc.node + 2);
        const int stride = spec.edges[idx].stride;
        edges.push_back({e.from, build_operation(e.op, cfg.channels, stride,
                                                 edge_prefix(cn, idx) + "." +
                                                     std::string(op_name(e.op)),
                                                 params_, rng)});
      }
      nodes.push_back(std::move(edges));
    }
    return nodes;
  };
  normal_nodes_ = build_cell(nspec, geno_.normal, "normal");
  reduction_nodes_ = build_cell(rspec, geno_.reduction, "reduction");
  add_head_params(params_, cfg_, rng);
}

Prediction DiscreteModel::forward(Tape& tape, const Tensor& x, const ParamBinding& bind) const {
  VarId stem = trunk_forward(tape, x, bind);
  auto run_cell = [&](const std::vector<std::vector<DiscreteEdge>>& cell,
                      const std::array<VarId, 2>& inputs) {
    std::vector<VarId> nodes{inputs[0], inputs[1]};
    std::vector<VarId> intermediates;
    for (const auto& edges : cell) {
      std::vector<VarId> incoming;
      for (const auto& de : edges)
        incoming.push_back(de.op.forward(tape, nodes[de.from], bind));
      VarId node = tape.add_many(incoming);
      nodes.push_back(node);
      intermediates.push_back(node);
    }
    return tape.concat_channels(intermediates);
  };
  VarId n_out = run_cell(normal_nodes_, {stem, stem});
  VarId r_in = tape.conv2d(n_out, bind.at("head.proj.w"), 1, 1, 1);
  VarId r_out = run_cell(reduction_nodes_, {r_in, r_in});
  return heads_forward(tape, r_out, bind, x.shape[0]);
}

DiscreteModel reconstruct(const Genotype& g, NetConfig cfg, uint64_t seed) {
  return DiscreteModel(g, cfg, seed);
}

void copy_shared_params(const ParamStore& src, ParamStore& dst) {
  for (auto& e : dst.entries()) {
    const Tensor& s = src.at(e.name);
    GNAS_CHECK(s.shape == e.value.shape, "copy_shared_params: shape mismatch for " + e.name);
    e.value.v = s.v;
  }
}

namespace {

void put_u32(std::string& s, uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(const std::string& s, size_t& off) {
  if (off + 4 > s.size()) throw ParseError("checkpoint: truncated");
  uint32_t v;
  std::memcpy(&v, s.data() + off, 4);
  off += 4;
  return v;
}

std::string serialize_params(const ParamStore& store) {
  std::string out = "GNCP";
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.group));
    put_u32(out, static_cast<uint32_t>(e.value.shape.size()));
    for (int d : e.value.shape) put_u32(out, static_cast<uint32_t>(d));
    out.append(reinterpret_cast<const char*>(e.value.v.data()), e.value.v.size() * sizeof(double));
  }
  return out;
}

}  // namespace

void save_params(const ParamStore& store, const std::string& path) {
  write_file(path, serialize_params(store));
}

void load_params(ParamStore& store, const std::string& path) {
  const std::string s = read_file(path);
  size_t off = 0;
  if (s.size() < 12 || s.compare(0, 4, "GNCP") != 0) throw ParseError("checkpoint: bad magic");
  off = 4;
  if (get_u32(s, off) != 1) throw ParseError("checkpoint: unsupported version");
  const uint32_t count = get_u32(s, off);
  if (count != store.entries().size()) throw ParseError("checkpoint: parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = get_u32(s, off);
    if (off + nlen + 1 > s.size()) throw ParseError("checkpoint: truncated");
    const std::string name = s.substr(off, nlen);
    off += nlen + 1;  // skip group byte
    const uint32_t nd = get_u32(s, off);
    std::vector<int> shape;
    for (uint32_t d = 0; d < nd; ++d) shape.push_back(static_cast<int>(get_u32(s, off)));
    Tensor& t = store.at(name);
    if (t.shape != shape) throw ParseError("checkpoint: shape mismatch for " + name);
    const size_t bytes = t.v.size() * sizeof(double);
    if (off + bytes > s.size()) throw ParseError("checkpoint: truncated");
    std::memcpy(t.v.data(), s.data() + off, bytes);
    off += bytes;
  }
}

std::string params_hash(const ParamStore& store) { return sha256_hex(serialize_params(store)); }

}  // namespace gnas
