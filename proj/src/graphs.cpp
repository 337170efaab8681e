#include <alignlab/graphs.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace alignlab {

namespace {

constexpr const char* kDatasetFormat = "alignlab-graph-dataset";
constexpr int kDatasetVersion = 1;

}  // namespace

std::vector<std::pair<int, int>> Graph::edge_list() const {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < node_count; ++u)
    for (int v : adjacency[u])
      if (u < v) edges.emplace_back(u, v);
  return edges;
}

std::string target_kind_name(TargetKind t) {
  return t == TargetKind::MaxDegree ? "max_degree" : "max_feature";
}

TargetKind parse_target_kind(const std::string& name) {
  if (name == "max_degree") return TargetKind::MaxDegree;
  if (name == "max_feature") return TargetKind::MaxNodeFeature;
  throw std::invalid_argument("unknown target kind '" + name +
                              "' (expected max_degree or max_feature)");
}

std::string feature_scheme_name(FeatureScheme s) {
  return s == FeatureScheme::Uniform1To100 ? "uniform_1_100" : "two_step";
}

FeatureScheme parse_feature_scheme(const std::string& name) {
  if (name == "uniform_1_100") return FeatureScheme::Uniform1To100;
  if (name == "two_step") return FeatureScheme::TwoStep;
  throw std::invalid_argument("unknown feature scheme '" + name +
                              "' (expected uniform_1_100 or two_step)");
}

float max_degree_label(const Graph& g) {
  std::size_t best = 0;
  for (const auto& nbrs : g.adjacency) best = std::max(best, nbrs.size());
  return static_cast<float>(best);
}

float max_feature_label(const Graph& g) {
  float best = 0.0f;
  for (float x : g.features) best = std::max(best, x);
  return best;
}

float target_label(const Graph& g, TargetKind t) {
  return t == TargetKind::MaxDegree ? max_degree_label(g) : max_feature_label(g);
}

std::vector<float> uniform_features(int node_count, Rng& rng) {
  std::uniform_int_distribution<int> dist(1, 100);
  std::vector<float> feats(node_count);
  for (auto& f : feats) f = static_cast<float>(dist(rng));
  return feats;
}

std::vector<float> two_step_features(int node_count, Rng& rng, int* m_out) {
  std::uniform_int_distribution<int> cap_dist(20, 100);
  const int cap = cap_dist(rng);
  if (m_out) *m_out = cap;
  std::uniform_int_distribution<int> dist(1, cap);
  std::vector<float> feats(node_count);
  for (auto& f : feats) f = static_cast<float>(dist(rng));
  return feats;
}

GraphDataset generate_er_dataset(const ErOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("generate_er_dataset: count must be >= 1");
  if (opt.min_nodes < 1 || opt.max_nodes < opt.min_nodes)
    throw std::invalid_argument("generate_er_dataset: invalid node count range");

  GraphDataset ds;
  ds.split_tag = opt.split_tag;
  ds.generator_seed = opt.seed;
  ds.target = opt.target;
  ds.scheme = opt.scheme;
  ds.graphs.resize(opt.count);
  ds.labels.resize(opt.count);

  for (int i = 0; i < opt.count; ++i) {
    Rng topo = make_rng({stream::kGraphTopology, opt.seed, static_cast<std::uint64_t>(i)});
    Rng feat = make_rng({stream::kGraphFeatures, opt.seed, static_cast<std::uint64_t>(i)});

    Graph& g = ds.graphs[i];
    std::uniform_int_distribution<int> n_dist(opt.min_nodes, opt.max_nodes);
    g.node_count = n_dist(topo);
    g.adjacency.assign(g.node_count, {});

    double p = opt.forced_edge_prob;
    if (p < 0.0) {
      std::uniform_int_distribution<int> p_dist(1, 9);
      p = p_dist(topo) / 10.0;
    }
    std::bernoulli_distribution edge(p);
    for (int u = 0; u < g.node_count; ++u)
      for (int v = u + 1; v < g.node_count; ++v)
        if (edge(topo)) {
          g.adjacency[u].push_back(v);
          g.adjacency[v].push_back(u);
        }

    g.features = opt.scheme == FeatureScheme::Uniform1To100
                     ? uniform_features(g.node_count, feat)
                     : two_step_features(g.node_count, feat);
    ds.labels[i] = target_label(g, opt.target);
  }
  return ds;
}

void save_dataset_jsonl(const GraphDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset_jsonl: cannot open '" + path + "' for writing");

  nlohmann::json header = {
      {"format", kDatasetFormat},
      {"version", kDatasetVersion},
      {"count", ds.graphs.size()},
      {"target", target_kind_name(ds.target)},
      {"feature_scheme", feature_scheme_name(ds.scheme)},
      {"split", ds.split_tag},
      {"seed", ds.generator_seed},
  };
  out << header.dump() << '\n';

  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    const Graph& g = ds.graphs[i];
    nlohmann::json line;
    line["n"] = g.node_count;
    auto& edges = line["edges"] = nlohmann::json::array();
    for (auto [u, v] : g.edge_list()) edges.push_back({u, v});
    line["features"] = g.features;
    line["label"] = ds.labels[i];
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset_jsonl: write to '" + path + "' failed");
}

GraphDataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset_jsonl: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_dataset_jsonl: empty file '" + path + "'");
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("format", "") != kDatasetFormat)
    throw std::runtime_error("load_dataset_jsonl: '" + path + "' is not a graph dataset file");
  const int version = header.value("version", -1);
  if (version != kDatasetVersion)
    throw std::runtime_error("load_dataset_jsonl: unsupported version " + std::to_string(version) +
                             " (expected " + std::to_string(kDatasetVersion) + ")");

  GraphDataset ds;
  ds.split_tag = header.value("split", "");
  ds.generator_seed = header.value("seed", std::uint64_t{0});
  ds.target = parse_target_kind(header.at("target").get<std::string>());
  ds.scheme = parse_feature_scheme(header.at("feature_scheme").get<std::string>());
  const std::size_t count = header.at("count").get<std::size_t>();
  ds.graphs.reserve(count);
  ds.labels.reserve(count);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Graph g;
    g.node_count = j.at("n").get<int>();
    if (g.node_count < 1)
      throw std::runtime_error("load_dataset_jsonl: bad node count at line " + std::to_string(line_no));
    g.adjacency.assign(g.node_count, {});
    for (const auto& e : j.at("edges")) {
      const int u = e.at(0).get<int>();
      const int v = e.at(1).get<int>();
      if (u < 0 || v < 0 || u >= g.node_count || v >= g.node_count || u == v)
        throw std::runtime_error("load_dataset_jsonl: bad edge at line " + std::to_string(line_no));
      g.adjacency[u].push_back(v);
      g.adjacency[v].push_back(u);
    }
    for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
    g.features = j.at("features").get<std::vector<float>>();
    if (static_cast<int>(g.features.size()) != g.node_count)
      throw std::runtime_error("load_dataset_jsonl: feature count mismatch at line " +
                               std::to_string(line_no));
    ds.graphs.push_back(std::move(g));
    ds.labels.push_back(j.at("label").get<float>());
  }
  if (ds.graphs.size() != count)
    throw std::runtime_error("load_dataset_jsonl: header count " + std::to_string(count) +
                             " does not match " + std::to_string(ds.graphs.size()) + " graph lines");
  return ds;
}

}  // namespace alignlab
