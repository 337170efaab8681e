#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <doctest.h>

#include <alignlab/graphs.hpp>
#include <alignlab/rng.hpp>

using namespace alignlab;

namespace {

// Independent oracle: max row sum of the dense adjacency matrix.
int max_degree_by_matrix(const Graph& g) {
  std::vector<std::vector<int>> a(g.node_count, std::vector<int>(g.node_count, 0));
  for (int u = 0; u < g.node_count; ++u)
    for (int v : g.adjacency[u]) a[u][v] = 1;
  int best = 0;
  for (int u = 0; u < g.node_count; ++u) {
    int row = 0;
    for (int v = 0; v < g.node_count; ++v) row += a[u][v];
    best = std::max(best, row);
  }
  return best;
}

Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                 std::vector<float> feats = {}) {
  Graph g;
  g.node_count = n;
  g.adjacency.assign(n, {});
  for (auto [u, v] : edges) {
    g.adjacency[u].push_back(v);
    g.adjacency[v].push_back(u);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  g.features = feats.empty() ? std::vector<float>(n, 1.0f) : std::move(feats);
  return g;
}

}  // namespace

TEST_CASE("max degree: hand-built graphs") {
  // Star: center 0 with 4 leaves.
  Graph star = from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  CHECK(max_degree_label(star) == 4.0f);
  // Path on 3 nodes.
  Graph path = from_edges(3, {{0, 1}, {1, 2}});
  CHECK(max_degree_label(path) == 2.0f);
  // Edgeless.
  Graph lone = from_edges(4, {});
  CHECK(max_degree_label(lone) == 0.0f);
}

TEST_CASE("max degree matches adjacency-matrix row-sum oracle on 200 random graphs") {
  for (int i = 0; i < 200; ++i) {
    ErOptions opt;
    opt.count = 1;
    opt.min_nodes = 5;
    opt.max_nodes = 45;
    opt.seed = 1000 + i;
    GraphDataset ds = generate_er_dataset(opt);
    CHECK(max_degree_label(ds.graphs[0]) == static_cast<float>(max_degree_by_matrix(ds.graphs[0])));
  }
}

TEST_CASE("max feature matches linear-scan oracle on 200 random graphs") {
  for (int i = 0; i < 200; ++i) {
    ErOptions opt;
    opt.count = 1;
    opt.scheme = i % 2 == 0 ? FeatureScheme::Uniform1To100 : FeatureScheme::TwoStep;
    opt.target = TargetKind::MaxNodeFeature;
    opt.seed = 2000 + i;
    GraphDataset ds = generate_er_dataset(opt);
    float best = ds.graphs[0].features[0];
    for (float x : ds.graphs[0].features) best = std::max(best, x);
    CHECK(max_feature_label(ds.graphs[0]) == best);
    CHECK(ds.labels[0] == best);
  }
  Graph g = from_edges(3, {{0, 1}}, {3.0f, 7.0f, 2.0f});
  CHECK(max_feature_label(g) == 7.0f);
  Graph same = from_edges(3, {}, {4.0f, 4.0f, 4.0f});
  CHECK(max_feature_label(same) == 4.0f);
}

TEST_CASE("forced edge probability 1 on 3 nodes yields the triangle") {
  ErOptions opt;
  opt.count = 1;
  opt.min_nodes = 3;
  opt.max_nodes = 3;
  opt.forced_edge_prob = 1.0;
  opt.seed = 7;
  GraphDataset ds = generate_er_dataset(opt);
  const Graph& g = ds.graphs[0];
  CHECK(g.node_count == 3);
  CHECK(g.edge_list().size() == 3);
  CHECK(ds.labels[0] == 2.0f);
}

TEST_CASE("generated adjacency is symmetric, self-loop free, and sorted") {
  ErOptions opt;
  opt.count = 50;
  opt.seed = 42;
  GraphDataset ds = generate_er_dataset(opt);
  for (const Graph& g : ds.graphs) {
    for (int u = 0; u < g.node_count; ++u) {
      CHECK(std::is_sorted(g.adjacency[u].begin(), g.adjacency[u].end()));
      for (int v : g.adjacency[u]) {
        CHECK(v != u);
        const auto& back = g.adjacency[v];
        CHECK(std::binary_search(back.begin(), back.end(), u));
      }
    }
  }
}

TEST_CASE("node count ranges and label bounds per split") {
  ErOptions train;
  train.count = 300;
  train.min_nodes = 20;
  train.max_nodes = 40;
  train.seed = 5;
  GraphDataset tr = generate_er_dataset(train);
  int lo = 1 << 30, hi = 0;
  for (const Graph& g : tr.graphs) {
    lo = std::min(lo, g.node_count);
    hi = std::max(hi, g.node_count);
  }
  CHECK(lo >= 20);
  CHECK(hi <= 40);
  CHECK(lo == 20);  // endpoints hit over 300 draws
  CHECK(hi == 40);
  for (float y : tr.labels) {
    CHECK(y >= 0.0f);
    CHECK(y <= 39.0f);
  }

  ErOptions test = train;
  test.min_nodes = 50;
  test.max_nodes = 70;
  test.split_tag = "test";
  test.target = TargetKind::MaxNodeFeature;
  GraphDataset te = generate_er_dataset(test);
  for (const Graph& g : te.graphs) {
    CHECK(g.node_count >= 50);
    CHECK(g.node_count <= 70);
  }
  for (float y : te.labels) {
    CHECK(y >= 1.0f);
    CHECK(y <= 100.0f);
  }
}

TEST_CASE("labels re-derive exactly from stored graphs") {
  for (TargetKind target : {TargetKind::MaxDegree, TargetKind::MaxNodeFeature}) {
    ErOptions opt;
    opt.count = 200;
    opt.target = target;
    opt.scheme = FeatureScheme::TwoStep;
    opt.seed = 99;
    GraphDataset ds = generate_er_dataset(opt);
    for (std::size_t i = 0; i < ds.size(); ++i)
      CHECK(ds.labels[i] == target_label(ds.graphs[i], target));
  }
}

TEST_CASE("fixed seed reproduces bit-identical datasets") {
  ErOptions opt;
  opt.count = 64;
  opt.scheme = FeatureScheme::TwoStep;
  opt.seed = 123;
  GraphDataset a = generate_er_dataset(opt);
  GraphDataset b = generate_er_dataset(opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.graphs[i].node_count == b.graphs[i].node_count);
    CHECK(a.graphs[i].adjacency == b.graphs[i].adjacency);
    CHECK(a.graphs[i].features == b.graphs[i].features);
    CHECK(a.labels[i] == b.labels[i]);
  }
  opt.seed = 124;
  GraphDataset c = generate_er_dataset(opt);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i)
    any_diff = a.graphs[i].adjacency != c.graphs[i].adjacency;
  CHECK(any_diff);
}

TEST_CASE("two-step cap M is uniform on {20..100} (chi-square at 0.01)") {
  const int draws = 10000;
  std::vector<int> counts(101, 0);
  Rng rng = make_rng({stream::kGraphFeatures, 777});
  for (int i = 0; i < draws; ++i) {
    int m = 0;
    auto feats = two_step_features(5, rng, &m);
    REQUIRE(m >= 20);
    REQUIRE(m <= 100);
    for (float f : feats) CHECK(f <= static_cast<float>(m));
    ++counts[m];
  }
  const double expected = draws / 81.0;
  double chi2 = 0.0;
  for (int m = 20; m <= 100; ++m) {
    const double d = counts[m] - expected;
    chi2 += d * d / expected;
  }
  // 99th percentile of chi-square with 80 degrees of freedom.
  CHECK(chi2 < 112.329);
}

TEST_CASE("uniform features live in {1..100} with mean near 50.5") {
  Rng rng = make_rng({stream::kGraphFeatures, 314});
  double sum = 0.0;
  int n = 0;
  for (int i = 0; i < 2000; ++i) {
    auto feats = uniform_features(30, rng);
    for (float f : feats) {
      CHECK(f >= 1.0f);
      CHECK(f <= 100.0f);
      CHECK(f == static_cast<float>(static_cast<int>(f)));
      sum += f;
      ++n;
    }
  }
  CHECK(std::abs(sum / n - 50.5) < 0.5);
}

TEST_CASE("mean edge density across 10k graphs is 0.5 +/- 0.02") {
  ErOptions opt;
  opt.count = 10000;
  opt.min_nodes = 20;
  opt.max_nodes = 40;
  opt.seed = 2024;
  GraphDataset ds = generate_er_dataset(opt);
  double total = 0.0;
  for (const Graph& g : ds.graphs) {
    const double pairs = g.node_count * (g.node_count - 1) / 2.0;
    total += g.edge_list().size() / pairs;
  }
  const double mean = total / ds.size();
  CHECK(mean > 0.48);
  CHECK(mean < 0.52);
}

TEST_CASE("jsonl round trip preserves everything; bad headers rejected") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "alignlab_graphs_test";
  fs::create_directories(dir);
  const std::string path = (dir / "ds.jsonl").string();

  ErOptions opt;
  opt.count = 40;
  opt.scheme = FeatureScheme::TwoStep;
  opt.target = TargetKind::MaxNodeFeature;
  opt.seed = 88;
  opt.split_tag = "valid";
  GraphDataset ds = generate_er_dataset(opt);
  save_dataset_jsonl(ds, path);
  GraphDataset back = load_dataset_jsonl(path);

  CHECK(back.split_tag == ds.split_tag);
  CHECK(back.generator_seed == ds.generator_seed);
  CHECK(back.target == ds.target);
  CHECK(back.scheme == ds.scheme);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.graphs[i].node_count == ds.graphs[i].node_count);
    CHECK(back.graphs[i].adjacency == ds.graphs[i].adjacency);
    CHECK(back.graphs[i].features == ds.graphs[i].features);
    CHECK(back.labels[i] == ds.labels[i]);
  }

  const std::string bad = (dir / "bad.jsonl").string();
  {
    std::FILE* f = std::fopen(bad.c_str(), "w");
    std::fputs("{\"format\":\"something-else\",\"version\":1}\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_dataset_jsonl(bad),
                       doctest::Contains("not a graph dataset"), std::runtime_error);
  {
    std::FILE* f = std::fopen(bad.c_str(), "w");
    std::fputs("{\"format\":\"alignlab-graph-dataset\",\"version\":999,\"count\":0,"
               "\"target\":\"max_degree\",\"feature_scheme\":\"uniform_1_100\"}\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_dataset_jsonl(bad),
                       doctest::Contains("unsupported version"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("enum name round trips and rejection") {
  CHECK(parse_target_kind(target_kind_name(TargetKind::MaxDegree)) == TargetKind::MaxDegree);
  CHECK(parse_target_kind(target_kind_name(TargetKind::MaxNodeFeature)) ==
        TargetKind::MaxNodeFeature);
  CHECK(parse_feature_scheme(feature_scheme_name(FeatureScheme::TwoStep)) ==
        FeatureScheme::TwoStep);
  CHECK_THROWS_AS(parse_target_kind("median_degree"), std::invalid_argument);
  CHECK_THROWS_AS(parse_feature_scheme("gaussian"), std::invalid_argument);
}
