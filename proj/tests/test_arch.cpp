#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "gnas/params.hpp"
#include "gnas/supernet.hpp"

using namespace gnas;

namespace {

Tensor rand_input(int n, uint64_t stream) {
  Rng rng = make_rng(3, stream);
  return Tensor::uniform({n, 3, 8, 8}, 0.0, 1.0, rng);
}

}  // namespace

TEST_CASE("op names round trip and unknown names are rejected") {
  for (int i = 0; i < kNumOps; ++i) {
    const OpKind k = static_cast<OpKind>(i);
    REQUIRE(op_from_name(op_name(k)).has_value());
    CHECK(*op_from_name(op_name(k)) == k);
  }
  CHECK(!op_from_name("sep_conv_7x7").has_value());
  CHECK(!op_from_name("").has_value());
}

TEST_CASE("cell spec wiring") {
  const CellSpec s = CellSpec::make(CellKind::Normal, 4, 8);
  // 2+3+4+5 incoming edges for p=4 with two input slots
  CHECK(s.edge_count() == 14);
  const CellSpec r = CellSpec::make(CellKind::Reduction, 4, 8);
  for (const auto& e : r.edges) CHECK(e.stride == (e.from < 2 ? 2 : 1));
  for (const auto& e : s.edges) CHECK(e.stride == 1);
}

TEST_CASE("mixed op equals the manual weighted sum of single ops") {
  Rng rng = make_rng(5, 1);
  ParamStore store;
  std::array<Operation, kNumOps> ops;
  for (int i = 0; i < kNumOps; ++i)
    ops[i] = build_operation(static_cast<OpKind>(i), 4, 1, "e" + std::to_string(i), store, rng);
  const Tensor x = Tensor::uniform({1, 4, 6, 6}, -1.0, 1.0, rng);
  const Tensor logits = Tensor::uniform({kNumOps}, -0.5, 0.5, rng);

  Tape tape;
  const ParamBinding bind = bind_params(tape, store, {});
  const VarId xid = tape.constant(x);
  const VarId alpha = tape.softmax(tape.constant(logits));
  const VarId mixed = mixed_op_forward(tape, ops, alpha, xid, bind);

  // copy: growing the tape below may invalidate references into it
  const std::vector<double> w = tape.val(alpha).v;
  std::vector<double> manual(tape.val(mixed).v.size(), 0.0);
  for (int i = 0; i < kNumOps; ++i) {
    const VarId oi = ops[i].forward(tape, xid, bind);
    const std::vector<double> out = tape.val(oi).v;
    for (size_t j = 0; j < manual.size(); ++j) manual[j] += w[i] * out[j];
  }
  for (size_t j = 0; j < manual.size(); ++j)
    CHECK(tape.val(mixed).v[j] == doctest::Approx(manual[j]).epsilon(1e-12));
}

TEST_CASE("discretize: argmax op, top-2 incoming edges, deterministic ties") {
  const CellSpec spec = CellSpec::make(CellKind::Normal, 2, 4);  // edges: 2 + 3
  // craft alphas: node 0 edges (from 0, from 1); node 1 edges (from 0,1,2)
  std::vector<Tensor> alphas(spec.edge_count(), Tensor::zeros({kNumOps}));
  // edge 0 (0->2): op 3 wins with 0.9
  alphas[0].v = {0.0, 0.0, 0.0, 0.9, 0.05, 0.0, 0.05};
  // edge 1 (1->2): op 6 wins with 0.8
  alphas[1].v = {0.1, 0.0, 0.0, 0.0, 0.0, 0.1, 0.8};
  // node 1: edge 2 (0->3) max 0.5, edge 3 (1->3) max 0.7, edge 4 (2->3) max 0.6
  alphas[2].v = {0.5, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05};
  alphas[3].v = {0.0, 0.7, 0.1, 0.1, 0.05, 0.05, 0.0};
  alphas[4].v = {0.1, 0.1, 0.6, 0.1, 0.05, 0.05, 0.0};
  const Genotype g = discretize_alphas(spec, alphas, spec, alphas);
  REQUIRE(g.normal.size() == 2);
  REQUIRE(g.normal[0].edges.size() == 2);
  CHECK(g.normal[0].edges[0].from == 0);
  CHECK(g.normal[0].edges[0].op == OpKind::DilConv5);
  CHECK(g.normal[0].edges[1].from == 1);
  CHECK(g.normal[0].edges[1].op == OpKind::SkipConnect);
  // node 1 keeps froms {1, 2} (maxima 0.7 and 0.6), drops from 0 (0.5)
  std::set<int> froms;
  for (const auto& e : g.normal[1].edges) froms.insert(e.from);
  CHECK(froms == std::set<int>{1, 2});

  // tie on every logit: lowest op index, then lowest source index
  std::vector<Tensor> flat(spec.edge_count(), Tensor::full({kNumOps}, 0.25));
  const Genotype tie = discretize_alphas(spec, flat, spec, flat);
  for (const auto& node : tie.normal)
    for (const auto& e : node.edges) CHECK(e.op == OpKind::SepConv3);
  CHECK(tie.normal[1].edges[0].from == 0);
  CHECK(tie.normal[1].edges[1].from == 1);
}

TEST_CASE("argmax decision is invariant to a constant logit shift") {
  SupernetModel model(NetConfig{4, 3}, 42);
  const Genotype before = model.discretize();
  for (auto& ent : model.params().entries())
    if (ent.group == Group::Arch)
      for (double& v : ent.value.v) v += 3.25;
  CHECK(model.discretize() == before);
}

TEST_CASE("genotype text round trip and rejection") {
  SupernetModel model(NetConfig{4, 4}, 7);
  const Genotype g = model.discretize();
  const std::string text = genotype_to_text(g);
  const Genotype back = genotype_from_text(text);
  CHECK(back == g);

  CHECK_THROWS_AS(genotype_from_text("not json at all {"), ParseError);
  // mangle an op name; the default near-uniform init still picks conv ops
  std::string mangled = text;
  const size_t p2 = mangled.find("conv");
  REQUIRE(p2 != std::string::npos);
  mangled.replace(p2, 4, "cnov");
  CHECK_THROWS_AS(genotype_from_text(mangled), ParseError);
}

TEST_CASE("one-hot supernet equals the reconstructed discrete model") {
  const NetConfig cfg{8, 4};
  SupernetModel super(cfg, 123);
  const Genotype g = super.discretize();
  DiscreteModel disc = reconstruct(g, cfg, 123);
  copy_shared_params(super.params(), disc.params());

  const auto [onehot, mask] = super.onehot_for(g);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = rand_input(2, 50 + trial);
    Tape ts;
    const ParamBinding bs = bind_params(ts, super.params(), {});
    const Prediction ps = super.forward(ts, x, bs, &onehot, &mask);
    Tape td;
    const ParamBinding bd = bind_params(td, disc.params(), {});
    const Prediction pd = disc.forward(td, x, bd);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::fabs(ts.val(ps.y1).v[i] - td.val(pd.y1).v[i]) < 1e-10);
      CHECK(std::fabs(ts.val(ps.y2).v[2 * i] - td.val(pd.y2).v[2 * i]) < 1e-10);
      CHECK(std::fabs(ts.val(ps.y2).v[2 * i + 1] - td.val(pd.y2).v[2 * i + 1]) < 1e-10);
    }
    const auto& fs = ts.val(ps.features).v;
    const auto& fd = td.val(pd.features).v;
    REQUIRE(fs.size() == fd.size());
    for (size_t i = 0; i < fs.size(); ++i) CHECK(std::fabs(fs[i] - fd[i]) < 1e-10);
  }
}

TEST_CASE("every discretized genotype is valid across random arch params") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    SupernetModel model(NetConfig{4, 4}, seed);
    // scramble the arch logits harder than the sigma=1e-3 init
    Rng rng = make_rng(seed, 99);
    for (auto& ent : model.params().entries())
      if (ent.group == Group::Arch) ent.value = Tensor::uniform(ent.value.shape, -2.0, 2.0, rng);
    CHECK_NOTHROW(validate_genotype(model.discretize()));
    // round trip through text
    CHECK(genotype_from_text(genotype_to_text(model.discretize())) == model.discretize());
  }
}

TEST_CASE("zero input with zeroed heads gives zero outputs") {
  const NetConfig cfg{4, 2};
  SupernetModel model(cfg, 11);
  for (auto& ent : model.params().entries())
    if (ent.name == "head.cls.w" || ent.name == "head.cls.b" || ent.name == "head.reg.w" ||
        ent.name == "head.reg.b")
      std::fill(ent.value.v.begin(), ent.value.v.end(), 0.0);
  Tape tape;
  const ParamBinding bind = bind_params(tape, model.params(), {});
  const Prediction p = model.forward(tape, Tensor::zeros({1, 3, 8, 8}), bind);
  CHECK(tape.val(p.y1).v[0] == 0.0);
  CHECK(tape.val(p.y2).v[0] == 0.0);
  CHECK(tape.val(p.y2).v[1] == 0.0);
}

TEST_CASE("all-skip genotype reconstructs without op conv parameters") {
  Genotype g;
  g.p = 4;
  for (int cell = 0; cell < 2; ++cell) {
    auto& nodes = cell == 0 ? g.normal : g.reduction;
    for (int node = 0; node < 4; ++node) {
      Genotype::NodeChoice nc;
      nc.node = node;
      const int limit = std::min(2, node + 2);
      for (int from = 0; from < limit; ++from) nc.edges.push_back({from, OpKind::SkipConnect});
      nodes.push_back(nc);
    }
  }
  validate_genotype(g);
  DiscreteModel m = reconstruct(g, NetConfig{4, 4}, 0);
  for (const auto& ent : m.params().entries()) {
    const bool op_param = ent.name.find(".dw") != std::string::npos ||
                          ent.name.find(".pw") != std::string::npos;
    CHECK(!op_param);
  }
}

TEST_CASE("params checkpoint round trip and hash stability") {
  namespace fs = std::filesystem;
  SupernetModel a(NetConfig{4, 2}, 5);
  const fs::path path = fs::temp_directory_path() / "gnas_test_ckpt.bin";
  save_params(a.params(), path.string());

  SupernetModel b(NetConfig{4, 2}, 6);  // same shapes, different values
  CHECK(params_hash(b.params()) != params_hash(a.params()));
  load_params(b.params(), path.string());
  CHECK(params_hash(b.params()) == params_hash(a.params()));
  for (size_t i = 0; i < a.params().entries().size(); ++i)
    CHECK(a.params().entries()[i].value.v == b.params().entries()[i].value.v);

  SupernetModel c(NetConfig{4, 4}, 5);  // shape mismatch must be rejected
  CHECK_THROWS(load_params(c.params(), path.string()));
  fs::remove(path);
}
