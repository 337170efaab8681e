#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <doctest.h>

#include <alignlab/checkpoint.hpp>
#include <alignlab/graphs.hpp>
#include <alignlab/models.hpp>
#include <alignlab/rng.hpp>

#include "gradcheck_suite.hpp"

using namespace alignlab;

namespace {

Graph make_graph(int n, const std::vector<std::pair<int, int>>& edges, std::vector<float> feats) {
  Graph g;
  g.node_count = n;
  g.adjacency.assign(n, {});
  for (auto [u, v] : edges) {
    g.adjacency[u].push_back(v);
    g.adjacency[v].push_back(u);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  g.features = std::move(feats);
  return g;
}

// Explicit parameter setting under which the max-sum forward computes the max
// degree exactly: the first pair module is irrelevant, the second ignores its
// input and emits 1 in every coordinate (so each node's neighbor sum is its
// degree), and the head reads out coordinate 0 of the max-pooled vector.
ModelParams max_degree_witness(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams p = init_params(spec, seed);
  for (int l = 0; l < spec.module_depth; ++l) {
    const std::string stem = "m1.l" + std::to_string(l);
    auto& W = p.at(stem + ".W");
    auto& b = p.at(stem + ".b");
    std::fill(W.data.begin(), W.data.end(), 0.0f);
    std::fill(b.data.begin(), b.data.end(), l + 1 == spec.module_depth ? 1.0f : 0.0f);
  }
  auto& hw = p.at("head.l0.W");
  std::fill(hw.data.begin(), hw.data.end(), 0.0f);
  hw.data[0] = 1.0f;
  auto& hb = p.at("head.l0.b");
  std::fill(hb.data.begin(), hb.data.end(), 0.0f);
  return p;
}

Graph permute_graph(const Graph& g, const std::vector<int>& perm) {
  Graph out;
  out.node_count = g.node_count;
  out.adjacency.assign(g.node_count, {});
  out.features.assign(g.node_count, 0.0f);
  for (int u = 0; u < g.node_count; ++u) {
    out.features[perm[u]] = g.features[u];
    for (int v : g.adjacency[u]) out.adjacency[perm[u]].push_back(perm[v]);
  }
  for (auto& nbrs : out.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return out;
}

}  // namespace

TEST_CASE("max-sum witness params compute the max degree exactly") {
  ModelSpec spec = graph_model_spec(Architecture::MaxSumGnn);
  ModelParams p = max_degree_witness(spec, 11);
  // Random graphs across densities, plus degenerate shapes.
  for (int i = 0; i < 30; ++i) {
    ErOptions opt;
    opt.count = 1;
    opt.min_nodes = 3;
    opt.max_nodes = 25;
    opt.seed = 500 + i;
    GraphDataset ds = generate_er_dataset(opt);
    auto out = infer_graph(spec, p, prepare_graph(ds.graphs[0]));
    CHECK(out.prediction.data[0] == max_degree_label(ds.graphs[0]));
    CHECK(out.representation.shape == Shape{1, 128});
  }
  Graph edgeless = make_graph(4, {}, {5, 9, 2, 7});
  CHECK(infer_graph(spec, p, prepare_graph(edgeless)).prediction.data[0] == 0.0f);
  Graph star = make_graph(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}}, {1, 2, 3, 4, 5, 6});
  CHECK(infer_graph(spec, p, prepare_graph(star)).prediction.data[0] == 5.0f);
}

TEST_CASE("graph models are bitwise permutation invariant") {
  ErOptions opt;
  opt.count = 1;
  opt.min_nodes = 12;
  opt.max_nodes = 12;
  opt.seed = 321;
  GraphDataset ds = generate_er_dataset(opt);
  const Graph& g = ds.graphs[0];

  std::vector<int> perm(g.node_count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng({stream::kShuffle, 9});
  std::shuffle(perm.begin(), perm.end(), rng);
  Graph gp = permute_graph(g, perm);

  for (Architecture a : {Architecture::MaxSumGnn, Architecture::MaxMaxGnn, Architecture::DeepSet}) {
    ModelSpec spec = graph_model_spec(a, 32);
    ModelParams p = init_params(spec, 77);
    auto out_a = infer_graph(spec, p, prepare_graph(g));
    auto out_b = infer_graph(spec, p, prepare_graph(gp));
    CHECK(out_a.prediction.data == out_b.prediction.data);
    CHECK(out_a.representation.data == out_b.representation.data);
  }
}

TEST_CASE("deepset is edge-blind; GNNs are not") {
  Graph a = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, {3, 1, 4, 1, 5});
  Graph b = make_graph(5, {{0, 4}, {1, 3}}, {3, 1, 4, 1, 5});  // same features, new edges

  ModelSpec ds_spec = graph_model_spec(Architecture::DeepSet, 16);
  ModelParams ds_params = init_params(ds_spec, 3);
  auto ra = infer_graph(ds_spec, ds_params, prepare_graph(a));
  auto rb = infer_graph(ds_spec, ds_params, prepare_graph(b));
  CHECK(ra.prediction.data == rb.prediction.data);
  CHECK(ra.representation.data == rb.representation.data);

  ModelSpec gnn_spec = graph_model_spec(Architecture::MaxSumGnn, 16);
  ModelParams gnn_params = init_params(gnn_spec, 3);
  auto ga = infer_graph(gnn_spec, gnn_params, prepare_graph(a));
  auto gb = infer_graph(gnn_spec, gnn_params, prepare_graph(b));
  CHECK(ga.prediction.data != gb.prediction.data);
}

TEST_CASE("single-node graph: GNN output is feature-independent, DeepSet's is not") {
  Graph c1 = make_graph(1, {}, {10});
  Graph c2 = make_graph(1, {}, {90});

  ModelSpec gnn = graph_model_spec(Architecture::MaxMaxGnn, 8);
  ModelParams gp = init_params(gnn, 5);
  auto g1 = infer_graph(gnn, gp, prepare_graph(c1));
  auto g2 = infer_graph(gnn, gp, prepare_graph(c2));
  CHECK(g1.prediction.data == g2.prediction.data);  // empty neighborhoods: zero vectors
  CHECK(std::isfinite(g1.prediction.data[0]));

  ModelSpec ds = graph_model_spec(Architecture::DeepSet, 8);
  ModelParams dp = init_params(ds, 5);
  auto d1 = infer_graph(ds, dp, prepare_graph(c1));
  auto d2 = infer_graph(ds, dp, prepare_graph(c2));
  CHECK(d1.prediction.data != d2.prediction.data);
}

TEST_CASE("deepset with pass-through modules computes the max feature") {
  ModelSpec spec = graph_model_spec(Architecture::DeepSet, 1);
  spec.module_depth = 1;
  spec.input_scale = 1.0f;  // exact pass-through: features must reach m0 unchanged
  ModelParams p = init_params(spec, 1);
  p.at("m0.l0.W").data = {1.0f};
  p.at("m0.l0.b").data = {0.0f};
  p.at("head.l0.W").data = {1.0f};
  p.at("head.l0.b").data = {0.0f};
  for (int i = 0; i < 20; ++i) {
    ErOptions opt;
    opt.count = 1;
    opt.target = TargetKind::MaxNodeFeature;
    opt.scheme = i % 2 ? FeatureScheme::TwoStep : FeatureScheme::Uniform1To100;
    opt.seed = 900 + i;
    GraphDataset ds = generate_er_dataset(opt);
    auto out = infer_graph(spec, p, prepare_graph(ds.graphs[0]));
    CHECK(out.prediction.data[0] == ds.labels[0]);
  }
}

TEST_CASE("mlp forward: zero params give zero logits; identity layers pass input through") {
  ModelSpec spec = mlp_spec(4, {4, 4}, 2);
  ModelParams zero = init_params(spec, 0);
  zero.set_zero();
  Tensor<float> x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto out = infer_batch(spec, zero, x);
  CHECK(out.prediction.shape == Shape{2, 2});
  for (float v : out.prediction.data) CHECK(v == 0.0f);

  ModelParams ident = init_params(spec, 0);
  ident.set_zero();
  for (const char* stem : {"l0", "l1"}) {
    auto& W = ident.at(std::string(stem) + ".W");
    for (int i = 0; i < 4; ++i) W.at(i, i) = 1.0f;
  }
  auto rep = extract_representation(spec, ident, x, "penultimate");
  CHECK(rep.data == x.data);  // nonnegative input passes relu unchanged
}

TEST_CASE("mini cnn: zero filters leave only the head bias; marker translation stays finite") {
  ModelSpec spec = mini_cnn_spec(16, 3, 10);
  ModelParams p = init_params(spec, 4);
  for (std::size_t i = 0; i + 2 < p.size(); ++i) std::fill(p.tensors[i].data.begin(), p.tensors[i].data.end(), 0.0f);
  Tensor<float> img({1, 16, 16, 3});
  for (auto& v : img.data) v = 0.5f;
  auto out = infer_batch(spec, p, img);
  const auto& bias = p.at("head.b");
  for (std::size_t c = 0; c < 10; ++c) CHECK(out.prediction.data[c] == bias.data[c]);

  ModelParams q = init_params(spec, 6);
  for (int shift : {0, 2, 4, 6}) {
    Tensor<float> im({1, 16, 16, 3});
    im.data[(std::size_t(1 + shift) * 16 + 3) * 3 + 0] = 1.0f;  // one bright pixel, moved by stride
    auto o = infer_batch(spec, q, im);
    CHECK(o.prediction.all_finite());
    CHECK(o.representation.shape == Shape{1, 64});
  }
}

TEST_CASE("representation taps: dimensions, determinism, unknown tap rejected") {
  ModelSpec gnn = graph_model_spec(Architecture::MaxSumGnn);
  ModelParams gp = init_params(gnn, 8);
  ErOptions opt;
  opt.count = 1;
  opt.seed = 77;
  GraphDataset ds = generate_er_dataset(opt);
  auto pg = prepare_graph(ds.graphs[0]);
  Tensor<float> r1 = extract_representation(gnn, gp, pg, "pooled");
  Tensor<float> r2 = extract_representation(gnn, gp, pg, "pooled");
  CHECK(r1.numel() == 128);
  CHECK(r1.data == r2.data);
  CHECK_THROWS_AS(extract_representation(gnn, gp, pg, "layer9"), std::invalid_argument);

  ModelSpec mlp = mlp_spec(768, {512, 512, 512}, 10);
  CHECK(mlp.representation_dim() == 512);
  CHECK(mini_cnn_spec().representation_dim() == 64);
  CHECK_THROWS_AS(validate_tap_point(mlp, "pooled"), std::invalid_argument);
}

TEST_CASE("init_params is seed-deterministic and layer shapes line up") {
  ModelSpec spec = graph_model_spec(Architecture::MaxMaxGnn, 64);
  ModelParams a = init_params(spec, 42);
  ModelParams b = init_params(spec, 42);
  ModelParams c = init_params(spec, 43);
  REQUIRE(a.size() == b.size());
  bool all_eq = true, any_neq = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_eq = all_eq && a.tensors[i].data == b.tensors[i].data;
    any_neq = any_neq || a.tensors[i].data != c.tensors[i].data;
  }
  CHECK(all_eq);
  CHECK(any_neq);

  // m0 consumes concatenated pair features; m1 consumes concatenated pair
  // embeddings; the head consumes the pooled width.
  CHECK(a.at("m0.l0.W").shape == Shape{2, 64});
  CHECK(a.at("m1.l0.W").shape == Shape{128, 64});
  CHECK(a.at("head.l0.W").shape == Shape{64, 1});
  for (const auto& t : a.tensors) CHECK(t.all_finite());

  // Glorot bounds: |W| <= sqrt(6/(fan_in+fan_out)); m1's fan-in is the
  // concatenated pair embedding (2 * width), its fan-out the width.
  const float bound = std::sqrt(6.0f / (128.0f + 64.0f)) + 1e-6f;
  for (float v : a.at("m1.l0.W").data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("model spec json round trip") {
  ModelSpec spec = mini_cnn_spec(16, 3, 10);
  spec.conv_channels = {8, 16, 32};
  spec.leaky_slope = 0.2f;
  ModelSpec back = model_spec_from_json(model_spec_to_json(spec));
  CHECK(back.architecture == spec.architecture);
  CHECK(back.conv_channels == spec.conv_channels);
  CHECK(back.leaky_slope == spec.leaky_slope);
  CHECK(back.tap_point == spec.tap_point);
  CHECK(back.output_dim == spec.output_dim);

  ModelSpec gnn = graph_model_spec(Architecture::MaxSumGnn, 32);
  ModelSpec gnn_back = model_spec_from_json(model_spec_to_json(gnn));
  CHECK(gnn_back.input_scale == gnn.input_scale);
  CHECK(gnn.input_scale == 0.01f);
}

TEST_CASE("params survive a checkpoint round trip bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "alignlab_models_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.bin").string();

  ModelSpec spec = graph_model_spec(Architecture::DeepSet, 32);
  ModelParams p = init_params(spec, 15);
  save_checkpoint(path, params_to_named(p));
  ModelParams q = params_from_named(load_checkpoint(path));
  REQUIRE(q.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(q.names[i] == p.names[i]);
    CHECK(q.tensors[i].data == p.tensors[i].data);
    CHECK(q.tensors[i].shape == p.tensors[i].shape);
  }
  fs::remove_all(dir);
}

TEST_CASE("finite-difference checks pass for every architecture") {
  auto results = testing::run_architecture_gradient_checks(2, 20260814);
  REQUIRE(results.size() == 10);
  int inconclusive = 0;
  for (const auto& r : results) {
    INFO(r.name, " max_rel_err=", r.report.max_rel_err, " worst=", r.report.worst_param);
    if (!r.report.conclusive) {
      ++inconclusive;
      continue;
    }
    CHECK(r.report.passed);
  }
  CHECK(inconclusive <= 1);
}

TEST_CASE("zero-node graph is rejected") {
  Graph g;
  g.node_count = 0;
  CHECK_THROWS_AS(build_graph_index(g), std::invalid_argument);
}
