#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <alignlab/rng.hpp>

namespace alignlab {

// Undirected graph with one scalar feature per node. Adjacency is stored as
// sorted neighbor lists; symmetry and absence of self-loops are construction
// invariants (and re-validated on deserialization).
struct Graph {
  int node_count = 0;
  std::vector<std::vector<int>> adjacency;
  std::vector<float> features;

  int degree(int u) const { return static_cast<int>(adjacency[u].size()); }
  // Edges as (u, v) pairs with u < v, in ascending order.
  std::vector<std::pair<int, int>> edge_list() const;
};

enum class TargetKind { MaxDegree, MaxNodeFeature };
enum class FeatureScheme { Uniform1To100, TwoStep };

std::string target_kind_name(TargetKind t);
TargetKind parse_target_kind(const std::string& name);
std::string feature_scheme_name(FeatureScheme s);
FeatureScheme parse_feature_scheme(const std::string& name);

struct GraphDataset {
  std::vector<Graph> graphs;
  std::vector<float> labels;
  std::string split_tag;  // "train" | "valid" | "test"
  std::uint64_t generator_seed = 0;
  TargetKind target = TargetKind::MaxDegree;
  FeatureScheme scheme = FeatureScheme::Uniform1To100;

  std::size_t size() const { return graphs.size(); }
};

// Largest neighbor count over all nodes; 0 for an edgeless graph.
float max_degree_label(const Graph& g);
// Largest node feature (plain max of the scalar features).
float max_feature_label(const Graph& g);
float target_label(const Graph& g, TargetKind t);

// Per-node features drawn uniformly from {1..100}.
std::vector<float> uniform_features(int node_count, Rng& rng);
// Two-step scheme: draw a per-graph cap M uniformly from {20..100}, then each
// node feature uniformly from {1..M}. If m_out is non-null it receives M.
std::vector<float> two_step_features(int node_count, Rng& rng, int* m_out = nullptr);

struct ErOptions {
  int count = 1;
  int min_nodes = 20;
  int max_nodes = 40;
  FeatureScheme scheme = FeatureScheme::Uniform1To100;
  TargetKind target = TargetKind::MaxDegree;
  std::uint64_t seed = 0;
  std::string split_tag = "train";
  // When >= 0, overrides the per-graph draw from {0.1,...,0.9} (tests use 1.0
  // to force complete graphs).
  double forced_edge_prob = -1.0;
};

// Erdos-Renyi datasets: per graph, node count uniform in [min_nodes,max_nodes],
// edge probability uniform over the discrete set {0.1,...,0.9}, features per
// scheme, label per target. Each graph uses sub-seeds derived from (seed,
// graph index), so output is reproducible and independent of how work is
// partitioned across threads.
GraphDataset generate_er_dataset(const ErOptions& opt);

// JSON-lines persistence: a versioned header line followed by one graph per
// line (node count, edge list, features, label).
void save_dataset_jsonl(const GraphDataset& ds, const std::string& path);
GraphDataset load_dataset_jsonl(const std::string& path);

}  // namespace alignlab
