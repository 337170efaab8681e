#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include <alignlab/checkpoint.hpp>
#include <alignlab/graphs.hpp>
#include <alignlab/rng.hpp>
#include <alignlab/tape.hpp>
#include <alignlab/tensor.hpp>

namespace alignlab {

enum class Architecture { MaxSumGnn, MaxMaxGnn, DeepSet, Mlp, MiniCnn };

inline std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::MaxSumGnn: return "max_sum_gnn";
    case Architecture::MaxMaxGnn: return "max_max_gnn";
    case Architecture::DeepSet: return "deepset";
    case Architecture::Mlp: return "mlp";
    case Architecture::MiniCnn: return "mini_cnn";
  }
  throw std::logic_error("architecture_name: bad enum");
}

inline Architecture parse_architecture(const std::string& name) {
  for (Architecture a : {Architecture::MaxSumGnn, Architecture::MaxMaxGnn, Architecture::DeepSet,
                         Architecture::Mlp, Architecture::MiniCnn})
    if (architecture_name(a) == name) return a;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

inline bool is_graph_architecture(Architecture a) {
  return a == Architecture::MaxSumGnn || a == Architecture::MaxMaxGnn || a == Architecture::DeepSet;
}

// Which layer boundary is exported as the model's representation vector.
//   "pooled"      — graph models and the mini CNN: the pooled vector feeding
//                   the prediction head.
//   "penultimate" — the flat MLP: the activation feeding the final linear.
struct ModelSpec {
  Architecture architecture = Architecture::MaxSumGnn;

  // Graph models: every embedding module is an MLP of `module_depth` linear
  // layers (ReLU between, none after the last) at hidden/output width `width`;
  // the prediction head is an MLP of `head_depth` layers.
  int width = 128;
  int module_depth = 3;
  int head_depth = 1;
  int node_feature_dim = 1;
  int output_dim = 1;
  // Multiplier applied to node features before the first module. Graph tasks
  // feed raw integer features up to 100; scaling them near [0,1] keeps early
  // sum-aggregated activations (and hence the initial loss landscape) tame
  // enough for the short desk-scale epoch budget. 1.0 = no scaling.
  float input_scale = 1.0f;

  // Flat MLP: input_dim -> mlp_hidden... -> output_dim, ReLU between layers.
  int input_dim = 768;
  std::vector<int> mlp_hidden = {512, 512, 512};

  // Mini CNN: per conv block 3x3 stride-1 same-padding conv, leaky ReLU, 2x2
  // max pool; then global average pool and a linear head.
  int image_size = 16;
  int image_channels = 3;
  std::vector<int> conv_channels = {16, 32, 64};
  float leaky_slope = 0.1f;

  std::string tap_point = "pooled";

  int representation_dim() const {
    switch (architecture) {
      case Architecture::MaxSumGnn:
      case Architecture::MaxMaxGnn:
      case Architecture::DeepSet: return width;
      case Architecture::Mlp: return mlp_hidden.empty() ? input_dim : mlp_hidden.back();
      case Architecture::MiniCnn: return conv_channels.back();
    }
    throw std::logic_error("representation_dim: bad enum");
  }

  std::string default_tap_point() const {
    return architecture == Architecture::Mlp ? "penultimate" : "pooled";
  }
};

inline ModelSpec graph_model_spec(Architecture a, int width = 128, int output_dim = 1) {
  if (!is_graph_architecture(a))
    throw std::invalid_argument("graph_model_spec: " + architecture_name(a) + " is not a graph model");
  ModelSpec s;
  s.architecture = a;
  s.width = width;
  s.output_dim = output_dim;
  s.input_scale = 0.01f;  // features are drawn from {1..100}
  s.tap_point = s.default_tap_point();
  return s;
}

inline ModelSpec mlp_spec(int input_dim, std::vector<int> hidden, int classes) {
  ModelSpec s;
  s.architecture = Architecture::Mlp;
  s.input_dim = input_dim;
  s.mlp_hidden = std::move(hidden);
  s.output_dim = classes;
  s.tap_point = s.default_tap_point();
  return s;
}

inline ModelSpec mini_cnn_spec(int image_size = 16, int channels = 3, int classes = 10) {
  ModelSpec s;
  s.architecture = Architecture::MiniCnn;
  s.image_size = image_size;
  s.image_channels = channels;
  s.output_dim = classes;
  s.tap_point = s.default_tap_point();
  return s;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& s) {
  return {{"architecture", architecture_name(s.architecture)},
          {"width", s.width},
          {"module_depth", s.module_depth},
          {"head_depth", s.head_depth},
          {"node_feature_dim", s.node_feature_dim},
          {"output_dim", s.output_dim},
          {"input_scale", s.input_scale},
          {"input_dim", s.input_dim},
          {"mlp_hidden", s.mlp_hidden},
          {"image_size", s.image_size},
          {"image_channels", s.image_channels},
          {"conv_channels", s.conv_channels},
          {"leaky_slope", s.leaky_slope},
          {"tap_point", s.tap_point}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.architecture = parse_architecture(j.at("architecture").get<std::string>());
  s.width = j.value("width", s.width);
  s.module_depth = j.value("module_depth", s.module_depth);
  s.head_depth = j.value("head_depth", s.head_depth);
  s.node_feature_dim = j.value("node_feature_dim", s.node_feature_dim);
  s.output_dim = j.value("output_dim", s.output_dim);
  s.input_scale = j.value("input_scale", s.input_scale);
  s.input_dim = j.value("input_dim", s.input_dim);
  s.mlp_hidden = j.value("mlp_hidden", s.mlp_hidden);
  s.image_size = j.value("image_size", s.image_size);
  s.image_channels = j.value("image_channels", s.image_channels);
  s.conv_channels = j.value("conv_channels", s.conv_channels);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  s.tap_point = j.value("tap_point", s.default_tap_point());
  return s;
}

// ---------------------------------------------------------------------------
// Parameters: an ordered name -> tensor store. Order is the single source of
// truth for optimizer state and checkpoint layout.

template <typename S>
struct ModelParamsT {
  std::vector<std::string> names;
  std::vector<Tensor<S>> tensors;

  std::size_t size() const { return tensors.size(); }

  Tensor<S>& add(std::string name, Tensor<S> t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
    return tensors.back();
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::invalid_argument("no parameter named '" + std::string(name) + "'");
  }

  Tensor<S>& at(std::string_view name) { return tensors[index_of(name)]; }
  const Tensor<S>& at(std::string_view name) const { return tensors[index_of(name)]; }

  ModelParamsT zeros_like() const {
    ModelParamsT z;
    z.names = names;
    z.tensors.reserve(tensors.size());
    for (const auto& t : tensors) z.tensors.push_back(Tensor<S>::zeros(t.shape));
    return z;
  }

  void set_zero() {
    for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), S(0));
  }

  template <typename T>
  ModelParamsT<T> cast() const {
    ModelParamsT<T> out;
    out.names = names;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<T>());
    return out;
  }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.data.size();
    return n;
  }
};

using ModelParams = ModelParamsT<float>;

template <typename S>
std::vector<Tensor<S>*> tensor_ptrs(ModelParamsT<S>& p) {
  std::vector<Tensor<S>*> out;
  out.reserve(p.tensors.size());
  for (auto& t : p.tensors) out.push_back(&t);
  return out;
}

template <typename S>
std::vector<const Tensor<S>*> tensor_cptrs(const ModelParamsT<S>& p) {
  std::vector<const Tensor<S>*> out;
  out.reserve(p.tensors.size());
  for (const auto& t : p.tensors) out.push_back(&t);
  return out;
}

inline NamedTensors params_to_named(const ModelParams& p) {
  NamedTensors out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(p.names[i], p.tensors[i]);
  return out;
}

inline ModelParams params_from_named(const NamedTensors& named) {
  ModelParams p;
  for (const auto& [name, t] : named) p.add(name, t);
  return p;
}

// Every weight matrix in a model, in creation order. Conv weights use the
// unrolled [k*k*Cin, Cout] layout, so `rows` is the fan-in for all entries.
struct LayerShape {
  std::string name;  // prefix: "<name>.W" and "<name>.b" are the tensors
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

inline std::vector<LayerShape> model_layers(const ModelSpec& spec) {
  std::vector<LayerShape> layers;
  auto mlp_module = [&](const std::string& prefix, int in, int out, int depth) {
    int cur = in;
    for (int l = 0; l < depth; ++l) {
      const int next = l + 1 == depth ? out : spec.width;
      layers.push_back({prefix + ".l" + std::to_string(l), cur, next});
      cur = next;
    }
  };
  switch (spec.architecture) {
    case Architecture::MaxSumGnn:
    case Architecture::MaxMaxGnn:
      mlp_module("m0", 2 * spec.node_feature_dim, spec.width, spec.module_depth);
      mlp_module("m1", 2 * spec.width, spec.width, spec.module_depth);
      mlp_module("head", spec.width, spec.output_dim, spec.head_depth);
      break;
    case Architecture::DeepSet:
      mlp_module("m0", spec.node_feature_dim, spec.width, spec.module_depth);
      mlp_module("head", spec.width, spec.output_dim, spec.head_depth);
      break;
    case Architecture::Mlp: {
      int cur = spec.input_dim;
      for (std::size_t l = 0; l < spec.mlp_hidden.size() + 1; ++l) {
        const int next =
            l == spec.mlp_hidden.size() ? spec.output_dim : spec.mlp_hidden[l];
        layers.push_back({"l" + std::to_string(l), cur, next});
        cur = next;
      }
      break;
    }
    case Architecture::MiniCnn: {
      int cin = spec.image_channels;
      for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
        layers.push_back({"conv" + std::to_string(i), std::int64_t{9} * cin, spec.conv_channels[i]});
        cin = spec.conv_channels[i];
      }
      layers.push_back({"head", cin, spec.output_dim});
      break;
    }
  }
  return layers;
}

// Glorot/Xavier uniform initialization, the scheme conventional for GNN MLP
// stacks: W ~ U(+-sqrt(6/(fan_in+fan_out))), b ~ U(+-1/sqrt(fan_in)). The
// init scale is load-bearing here — the probe readout of an *untrained*
// network is a reported baseline, and its value tracks the init family.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams params;
  Rng rng = make_rng({stream::kInit, seed});
  for (const LayerShape& ls : model_layers(spec)) {
    const double fan_in = static_cast<double>(ls.rows);
    const double wb = std::sqrt(6.0 / (fan_in + static_cast<double>(ls.cols)));
    std::uniform_real_distribution<double> wd(-wb, wb);
    std::uniform_real_distribution<double> bd(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    Tensor<float> W({ls.rows, ls.cols});
    for (auto& v : W.data) v = static_cast<float>(wd(rng));
    Tensor<float> b({std::int64_t{1}, ls.cols});
    for (auto& v : b.data) v = static_cast<float>(bd(rng));
    params.add(ls.name + ".W", std::move(W));
    params.add(ls.name + ".b", std::move(b));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Binding parameters onto a tape.

template <typename S>
struct BoundModel {
  const ModelSpec* spec = nullptr;
  const ModelParamsT<S>* params = nullptr;
  std::vector<typename Tape<S>::Val> vals;

  typename Tape<S>::Val val(std::string_view name) const {
    return vals[params->index_of(name)];
  }
};

// Registers every parameter as a tape leaf. If `grads` is non-null it must be
// shape-congruent with `params`; gradients accumulate (+=) into it across
// backward calls until the caller resets it.
template <typename S>
BoundModel<S> bind_model(Tape<S>& tape, const ModelSpec& spec, const ModelParamsT<S>& params,
                         ModelParamsT<S>* grads) {
  BoundModel<S> m;
  m.spec = &spec;
  m.params = &params;
  m.vals.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    m.vals.push_back(tape.leaf(params.tensors[i], grads ? &grads->tensors[i] : nullptr));
  return m;
}

// Runs one MLP module: depth linear layers with ReLU between (none after the
// last layer).
template <typename S>
typename Tape<S>::Val run_mlp_module(Tape<S>& tape, const BoundModel<S>& m,
                                     const std::string& prefix, int depth,
                                     typename Tape<S>::Val x) {
  for (int l = 0; l < depth; ++l) {
    const std::string stem = prefix + ".l" + std::to_string(l);
    x = tape.linear(x, m.val(stem + ".W"), m.val(stem + ".b"));
    if (l + 1 < depth) x = tape.relu(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Graph forward passes.
//
// Neighbor pairs are laid out as one contiguous block per node u (u ascending,
// neighbors v in adjacency order), with CSR offsets delimiting the blocks.
// That makes per-node neighborhood reduction a segment reduction, and keeps
// the whole graph pass inside dense matrix ops.

struct GraphIndex {
  std::shared_ptr<const std::vector<std::int32_t>> pair_u, pair_v, offsets;
  int node_count = 0;
  int pair_count = 0;
};

inline GraphIndex build_graph_index(const Graph& g) {
  if (g.node_count < 1) throw std::invalid_argument("graph forward: graph has no nodes");
  auto pu = std::make_shared<std::vector<std::int32_t>>();
  auto pv = std::make_shared<std::vector<std::int32_t>>();
  auto off = std::make_shared<std::vector<std::int32_t>>();
  off->reserve(g.node_count + 1);
  off->push_back(0);
  for (int u = 0; u < g.node_count; ++u) {
    for (int v : g.adjacency[u]) {
      pu->push_back(u);
      pv->push_back(v);
    }
    off->push_back(static_cast<std::int32_t>(pu->size()));
  }
  GraphIndex idx;
  idx.node_count = g.node_count;
  idx.pair_count = static_cast<int>(pu->size());
  idx.pair_u = std::move(pu);
  idx.pair_v = std::move(pv);
  idx.offsets = std::move(off);
  return idx;
}

// A graph pre-packed for the tape: feature matrix plus pair index. Building
// this once per graph and reusing it across epochs avoids re-deriving the
// index every forward pass.
template <typename S>
struct PreparedGraph {
  Tensor<S> features;  // [n, d]
  GraphIndex index;
};

template <typename S = float>
PreparedGraph<S> prepare_graph(const Graph& g, int feature_dim = 1) {
  if (static_cast<int>(g.features.size()) != g.node_count * feature_dim)
    throw std::invalid_argument("prepare_graph: feature count does not match node count");
  PreparedGraph<S> p;
  p.features = Tensor<S>({g.node_count, feature_dim});
  for (std::size_t i = 0; i < g.features.size(); ++i) p.features.data[i] = static_cast<S>(g.features[i]);
  p.index = build_graph_index(g);
  return p;
}

template <typename S>
struct ForwardOut {
  typename Tape<S>::Val prediction;      // [1, output_dim] (graph) or [B, output_dim]
  typename Tape<S>::Val representation;  // pooled/penultimate vector
};

template <typename S>
ForwardOut<S> forward_graph_model(Tape<S>& tape, const BoundModel<S>& m, const PreparedGraph<S>& g) {
  const ModelSpec& spec = *m.spec;
  if (!is_graph_architecture(spec.architecture))
    throw std::invalid_argument("forward_graph_model: " + architecture_name(spec.architecture));
  using V = typename Tape<S>::Val;

  Tensor<S> features = g.features;
  if (spec.input_scale != 1.0f)
    for (S& v : features.data) v *= static_cast<S>(spec.input_scale);
  V X = tape.constant(std::move(features));
  V rep;
  if (spec.architecture == Architecture::DeepSet) {
    V M0 = run_mlp_module(tape, m, "m0", spec.module_depth, X);
    rep = tape.reduce_max(M0, 0);
  } else {
    const bool sum_agg = spec.architecture == Architecture::MaxSumGnn;
    V Xu = tape.gather_rows(X, g.index.pair_u);
    V Xv = tape.gather_rows(X, g.index.pair_v);
    V M0 = run_mlp_module(tape, m, "m0", spec.module_depth, tape.concat_last_dim(Xu, Xv));
    V H = sum_agg ? tape.segment_sum(M0, g.index.offsets) : tape.segment_max(M0, g.index.offsets);
    V Hu = tape.gather_rows(H, g.index.pair_u);
    V Hv = tape.gather_rows(H, g.index.pair_v);
    V M1 = run_mlp_module(tape, m, "m1", spec.module_depth, tape.concat_last_dim(Hu, Hv));
    V Z = sum_agg ? tape.segment_sum(M1, g.index.offsets) : tape.segment_max(M1, g.index.offsets);
    rep = tape.reduce_max(Z, 0);
  }
  ForwardOut<S> out;
  out.representation = rep;
  out.prediction = run_mlp_module(tape, m, "head", spec.head_depth, rep);
  return out;
}

// Flat MLP on a [B, input_dim] batch. The representation is the activation
// feeding the final linear layer.
template <typename S>
ForwardOut<S> forward_mlp(Tape<S>& tape, const BoundModel<S>& m, typename Tape<S>::Val input) {
  const ModelSpec& spec = *m.spec;
  if (spec.architecture != Architecture::Mlp)
    throw std::invalid_argument("forward_mlp: " + architecture_name(spec.architecture));
  using V = typename Tape<S>::Val;
  const int layer_count = static_cast<int>(spec.mlp_hidden.size()) + 1;
  V a = input;
  for (int l = 0; l + 1 < layer_count; ++l) {
    const std::string stem = "l" + std::to_string(l);
    a = tape.relu(tape.linear(a, m.val(stem + ".W"), m.val(stem + ".b")));
  }
  const std::string last = "l" + std::to_string(layer_count - 1);
  ForwardOut<S> out;
  out.representation = a;
  out.prediction = tape.linear(a, m.val(last + ".W"), m.val(last + ".b"));
  return out;
}

// Mini CNN on a [B, H, W, C] batch. The representation is the globally pooled
// channel vector feeding the linear head.
template <typename S>
ForwardOut<S> forward_mini_cnn(Tape<S>& tape, const BoundModel<S>& m, typename Tape<S>::Val images) {
  const ModelSpec& spec = *m.spec;
  if (spec.architecture != Architecture::MiniCnn)
    throw std::invalid_argument("forward_mini_cnn: " + architecture_name(spec.architecture));
  using V = typename Tape<S>::Val;
  V a = images;
  for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
    const std::string stem = "conv" + std::to_string(i);
    a = tape.conv2d(a, m.val(stem + ".W"), m.val(stem + ".b"), 3);
    a = tape.leaky_relu(a, static_cast<S>(spec.leaky_slope));
    a = tape.maxpool2d(a);
  }
  ForwardOut<S> out;
  out.representation = tape.global_avg_pool(a);
  out.prediction = tape.linear(out.representation, m.val("head.W"), m.val("head.b"));
  return out;
}

// ---------------------------------------------------------------------------
// Inference (no recording, no gradients).

template <typename S>
struct InferenceOut {
  Tensor<S> prediction;
  Tensor<S> representation;
};

inline void validate_tap_point(const ModelSpec& spec, const std::string& tap) {
  if (tap != spec.default_tap_point())
    throw std::invalid_argument("unknown tap point '" + tap + "' for " +
                                architecture_name(spec.architecture) + " (expected '" +
                                spec.default_tap_point() + "')");
}

template <typename S>
InferenceOut<S> infer_graph(const ModelSpec& spec, const ModelParamsT<S>& params,
                            const PreparedGraph<S>& g) {
  Tape<S> tape;
  tape.set_recording(false);
  BoundModel<S> m = bind_model(tape, spec, params, static_cast<ModelParamsT<S>*>(nullptr));
  ForwardOut<S> f = forward_graph_model(tape, m, g);
  return {tape.value(f.prediction), tape.value(f.representation)};
}

template <typename S>
InferenceOut<S> infer_batch(const ModelSpec& spec, const ModelParamsT<S>& params,
                            const Tensor<S>& inputs) {
  Tape<S> tape;
  tape.set_recording(false);
  BoundModel<S> m = bind_model(tape, spec, params, static_cast<ModelParamsT<S>*>(nullptr));
  typename Tape<S>::Val in = tape.constant(inputs);
  ForwardOut<S> f = spec.architecture == Architecture::Mlp ? forward_mlp(tape, m, in)
                                                           : forward_mini_cnn(tape, m, in);
  return {tape.value(f.prediction), tape.value(f.representation)};
}

// Representation at a named tap point, inference mode.
template <typename S>
Tensor<S> extract_representation(const ModelSpec& spec, const ModelParamsT<S>& params,
                                 const PreparedGraph<S>& g, const std::string& tap_point) {
  validate_tap_point(spec, tap_point);
  return infer_graph(spec, params, g).representation;
}

template <typename S>
Tensor<S> extract_representation(const ModelSpec& spec, const ModelParamsT<S>& params,
                                 const Tensor<S>& inputs, const std::string& tap_point) {
  validate_tap_point(spec, tap_point);
  return infer_batch(spec, params, inputs).representation;
}

}  // namespace alignlab
