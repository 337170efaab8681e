#include <alignlab/harness.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <alignlab/adam.hpp>
#include <alignlab/analysis.hpp>
#include <alignlab/rng.hpp>
#include <alignlab/tape.hpp>

namespace alignlab {

// First `count` elements of a partial Fisher-Yates pass, sorted. Matches the
// corruption-subset draw so the two kinds of subset stay comparable.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, Rng& rng) {
  if (count > total) throw std::invalid_argument("sample_indices: count exceeds total");
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, total - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t probe_subset_size(double fraction, std::size_t n) {
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::max<std::size_t>(1, std::min(count, n));
}

namespace {

std::string format_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void diverged(const char* what, int epoch, int batch) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s: non-finite loss at epoch %d, batch %d", what, epoch, batch);
  throw std::runtime_error(buf);
}

ProbeRegularizer parse_probe_regularizer(const std::string& name) {
  if (name == "ols") return ProbeRegularizer::Ols;
  if (name == "ridge") return ProbeRegularizer::Ridge;
  throw std::invalid_argument("unknown probe regularizer '" + name + "' (expected ols|ridge)");
}

}  // namespace

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::Mae: return "mae";
    case LossKind::CrossEntropy: return "cross_entropy";
  }
  throw std::logic_error("loss_kind_name: bad enum");
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind k : {LossKind::Mse, LossKind::Mae, LossKind::CrossEntropy})
    if (loss_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown loss '" + name + "' (expected mse|mae|cross_entropy)");
}

const char* selection_rule_name(SelectionRule r) {
  switch (r) {
    case SelectionRule::EarlyStopNoisyValid: return "early_stop_noisy_valid";
    case SelectionRule::LastEpoch: return "last_epoch";
  }
  throw std::logic_error("selection_rule_name: bad enum");
}

SelectionRule parse_selection_rule(const std::string& name) {
  for (SelectionRule r : {SelectionRule::EarlyStopNoisyValid, SelectionRule::LastEpoch})
    if (selection_rule_name(r) == name) return r;
  throw std::invalid_argument("unknown selection rule '" + name +
                              "' (expected early_stop_noisy_valid|last_epoch)");
}

int TrainConfig::effective_epoch_cap() const {
  if (memorize_train_accuracy <= 0.0) return epochs;
  return epoch_cap > 0 ? epoch_cap : 4 * epochs;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train config: learning rate must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0)
    throw std::invalid_argument("train config: lr decay factor must lie in (0, 1]");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight decay must be >= 0");
  if (memorize_train_accuracy > 0.0) {
    if (loss != LossKind::CrossEntropy)
      throw std::invalid_argument("train config: memorization rule needs cross-entropy training");
    if (memorize_train_accuracy > 100.0)
      throw std::invalid_argument("train config: memorization threshold is a percentage");
    if (epoch_cap > 0 && epoch_cap < epochs)
      throw std::invalid_argument("train config: epoch cap below the epoch budget");
  }
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"loss", loss_kind_name(cfg.loss)},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"lr_decay", cfg.lr_decay},
          {"weight_decay", cfg.weight_decay},
          {"selection", selection_rule_name(cfg.selection)},
          {"seed", cfg.seed},
          {"memorize_train_accuracy", cfg.memorize_train_accuracy},
          {"epoch_cap", cfg.epoch_cap}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.loss = parse_loss_kind(j.value("loss", std::string(loss_kind_name(cfg.loss))));
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.selection =
      parse_selection_rule(j.value("selection", std::string(selection_rule_name(cfg.selection))));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.memorize_train_accuracy = j.value("memorize_train_accuracy", cfg.memorize_train_accuracy);
  cfg.epoch_cap = j.value("epoch_cap", cfg.epoch_cap);
  cfg.validate();
  return cfg;
}

double mean_loss(const std::vector<float>& predictions, const std::vector<float>& labels,
                 LossKind loss) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("mean_loss: need equal-length non-empty inputs");
  if (loss == LossKind::CrossEntropy)
    throw std::invalid_argument("mean_loss: cross-entropy needs class labels, not scalars");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = static_cast<double>(predictions[i]) - static_cast<double>(labels[i]);
    sum += loss == LossKind::Mse ? d * d : std::abs(d);
  }
  return sum / static_cast<double>(predictions.size());
}

TrainedModel train_graph_model(const ModelSpec& spec, const GraphDataset& train,
                               const std::vector<float>& train_labels, const GraphDataset& valid,
                               const std::vector<float>& valid_labels, const TrainConfig& cfg) {
  cfg.validate();
  if (!is_graph_architecture(spec.architecture))
    throw std::invalid_argument("train_graph_model: " + architecture_name(spec.architecture));
  if (cfg.loss == LossKind::CrossEntropy)
    throw std::invalid_argument("train_graph_model: regression task needs mse or mae");
  if (train.size() == 0 || train.size() != train_labels.size())
    throw std::invalid_argument("train_graph_model: train labels do not match dataset");
  if (valid.size() == 0 || valid.size() != valid_labels.size())
    throw std::invalid_argument("train_graph_model: valid labels do not match dataset");

  std::vector<PreparedGraph<float>> prepared_train, prepared_valid;
  prepared_train.reserve(train.size());
  for (const Graph& g : train.graphs) prepared_train.push_back(prepare_graph<float>(g));
  prepared_valid.reserve(valid.size());
  for (const Graph& g : valid.graphs) prepared_valid.push_back(prepare_graph<float>(g));

  TrainedModel out;
  out.spec = spec;
  out.params = init_params(spec, cfg.seed);
  ModelParams grads = out.params.zeros_like();
  Adam<float> adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto param_ptrs = tensor_ptrs(out.params);
  const auto grad_ptrs = tensor_cptrs(grads);

  ModelParams best_params = out.params;
  double best_valid = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Tensor<float> target({1, 1});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);
    adam.options().lr = lr;
    Rng shuffle_rng = make_rng({stream::kShuffle, cfg.seed, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        Tape<float> tape;
        BoundModel<float> m = bind_model(tape, spec, out.params, &grads);
        ForwardOut<float> f = forward_graph_model(tape, m, prepared_train[i]);
        target.data[0] = train_labels[i];
        Tape<float>::Val loss = cfg.loss == LossKind::Mse ? tape.mse_loss(f.prediction, target)
                                                          : tape.mae_loss(f.prediction, target);
        tape.backward(loss, inv_batch);
        batch_loss += static_cast<double>(tape.value(loss).data[0]);
      }
      if (!std::isfinite(batch_loss)) diverged("train_graph_model", epoch, batch_index);
      adam.step(param_ptrs, grad_ptrs);
      epoch_loss += batch_loss;
      ++batch_index;
    }

    std::vector<float> valid_preds(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i)
      valid_preds[i] = infer_graph(spec, out.params, prepared_valid[i]).prediction.data[0];
    const double valid_metric = mean_loss(valid_preds, valid_labels, cfg.loss);

    out.history.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(train.size()), valid_metric, -1.0, lr});
    if (valid_metric < best_valid) {
      best_valid = valid_metric;
      best_epoch = epoch;
      best_params = out.params;
    }
  }

  if (cfg.selection == SelectionRule::EarlyStopNoisyValid) {
    out.params = std::move(best_params);
    out.history.selected_epoch = best_epoch;
  } else {
    out.history.selected_epoch = cfg.epochs - 1;
  }
  return out;
}

std::vector<float> predict_graphs(const ModelSpec& spec, const ModelParams& params,
                                  const GraphDataset& ds) {
  std::vector<float> preds(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    preds[i] = infer_graph(spec, params, prepare_graph<float>(ds.graphs[i])).prediction.data[0];
  return preds;
}

Tensor<double> graph_representations(const ModelSpec& spec, const ModelParams& params,
                                     const GraphDataset& ds, const std::string& tap_point) {
  validate_tap_point(spec, tap_point);
  const int dim = spec.representation_dim();
  Tensor<double> reps({static_cast<std::int64_t>(ds.size()), dim});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor<float> r = infer_graph(spec, params, prepare_graph<float>(ds.graphs[i])).representation;
    for (int j = 0; j < dim; ++j)
      reps.at(static_cast<std::int64_t>(i), j) = static_cast<double>(r.data[static_cast<std::size_t>(j)]);
  }
  return reps;
}

namespace {

// Evaluation batch size: bounds tape memory while amortizing the gemms.
constexpr std::size_t kEvalChunk = 128;

Tensor<float> vision_inputs(const ModelSpec& spec, const VisionDataset& ds) {
  return spec.architecture == Architecture::Mlp ? flatten_images(ds) : ds.images;
}

Tensor<float> slice_rows(const Tensor<float>& inputs, const std::vector<std::size_t>& order,
                         std::size_t start, std::size_t end) {
  Shape shape = inputs.shape;
  shape[0] = static_cast<std::int64_t>(end - start);
  std::int64_t row = 1;
  for (std::size_t d = 1; d < inputs.shape.size(); ++d) row *= inputs.shape[d];
  Tensor<float> out(shape);
  for (std::size_t k = start; k < end; ++k)
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(order[k] * static_cast<std::size_t>(row)),
                row, out.data.begin() + static_cast<std::ptrdiff_t>((k - start) * static_cast<std::size_t>(row)));
  return out;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

std::vector<std::int32_t> argmax_logits(const Tensor<float>& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows()));
  for (std::int64_t i = 0; i < logits.rows(); ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

std::vector<std::int32_t> predict_inputs(const ModelSpec& spec, const ModelParams& params,
                                         const Tensor<float>& inputs) {
  const std::size_t n = static_cast<std::size_t>(inputs.shape[0]);
  const std::vector<std::size_t> order = identity_order(n);
  std::vector<std::int32_t> preds;
  preds.reserve(n);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    const auto chunk = argmax_logits(infer_batch(spec, params, slice_rows(inputs, order, start, end)).prediction);
    preds.insert(preds.end(), chunk.begin(), chunk.end());
  }
  return preds;
}

}  // namespace

std::vector<std::int32_t> predict_vision(const ModelSpec& spec, const ModelParams& params,
                                         const VisionDataset& ds) {
  return predict_inputs(spec, params, vision_inputs(spec, ds));
}

Tensor<double> vision_representations(const ModelSpec& spec, const ModelParams& params,
                                      const VisionDataset& ds, const std::string& tap_point) {
  validate_tap_point(spec, tap_point);
  const Tensor<float> inputs = vision_inputs(spec, ds);
  const std::size_t n = ds.size();
  const std::vector<std::size_t> order = identity_order(n);
  const int dim = spec.representation_dim();
  Tensor<double> reps({static_cast<std::int64_t>(n), dim});
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    const Tensor<float> r = infer_batch(spec, params, slice_rows(inputs, order, start, end)).representation;
    for (std::size_t i = start; i < end; ++i)
      for (int j = 0; j < dim; ++j)
        reps.at(static_cast<std::int64_t>(i), j) =
            static_cast<double>(r.at(static_cast<std::int64_t>(i - start), j));
  }
  return reps;
}

TrainedModel train_vision_model(const ModelSpec& spec, const VisionDataset& train,
                                const std::vector<std::int32_t>& train_labels,
                                const VisionDataset& valid,
                                const std::vector<std::int32_t>& valid_labels,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (spec.architecture != Architecture::Mlp && spec.architecture != Architecture::MiniCnn)
    throw std::invalid_argument("train_vision_model: " + architecture_name(spec.architecture));
  if (cfg.loss != LossKind::CrossEntropy)
    throw std::invalid_argument("train_vision_model: classification task needs cross-entropy");
  if (train.size() == 0 || train.size() != train_labels.size())
    throw std::invalid_argument("train_vision_model: train labels do not match dataset");
  if (valid.size() == 0 || valid.size() != valid_labels.size())
    throw std::invalid_argument("train_vision_model: valid labels do not match dataset");
  for (const std::int32_t y : train_labels)
    if (y < 0 || y >= spec.output_dim)
      throw std::invalid_argument("train_vision_model: label out of range");

  const Tensor<float> train_inputs = vision_inputs(spec, train);
  const Tensor<float> valid_inputs = vision_inputs(spec, valid);

  TrainedModel out;
  out.spec = spec;
  out.params = init_params(spec, cfg.seed);
  ModelParams grads = out.params.zeros_like();
  Adam<float> adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto param_ptrs = tensor_ptrs(out.params);
  const auto grad_ptrs = tensor_cptrs(grads);

  ModelParams best_params = out.params;
  double best_valid = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::size_t> order = identity_order(train.size());
  const int cap = cfg.effective_epoch_cap();

  for (int epoch = 0; epoch < cap; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);
    adam.options().lr = lr;
    Rng shuffle_rng = make_rng({stream::kShuffle, cfg.seed, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      grads.set_zero();
      Tape<float> tape;
      BoundModel<float> m = bind_model(tape, spec, out.params, &grads);
      Tape<float>::Val in = tape.constant(slice_rows(train_inputs, order, start, end));
      ForwardOut<float> f = spec.architecture == Architecture::Mlp ? forward_mlp(tape, m, in)
                                                                   : forward_mini_cnn(tape, m, in);
      auto classes = std::make_shared<std::vector<std::int32_t>>();
      classes->reserve(end - start);
      for (std::size_t k = start; k < end; ++k) classes->push_back(train_labels[order[k]]);
      Tape<float>::Val loss = tape.softmax_cross_entropy(f.prediction, classes);
      tape.backward(loss, 1.0f);
      const double batch_loss = static_cast<double>(tape.value(loss).data[0]);
      if (!std::isfinite(batch_loss)) diverged("train_vision_model", epoch, batch_index);
      adam.step(param_ptrs, grad_ptrs);
      epoch_loss += batch_loss * static_cast<double>(end - start);
      ++batch_index;
    }

    const double train_acc = accuracy(predict_inputs(spec, out.params, train_inputs), train_labels);
    const double valid_err = 100.0 - accuracy(predict_inputs(spec, out.params, valid_inputs), valid_labels);
    out.history.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(train.size()), valid_err, train_acc, lr});
    if (valid_err < best_valid) {
      best_valid = valid_err;
      best_epoch = epoch;
      best_params = out.params;
    }

    // Stop at the epoch budget, or later once the working labels are
    // memorized; the cap bounds the extension.
    if (epoch + 1 >= cfg.epochs) {
      if (cfg.memorize_train_accuracy <= 0.0) break;
      if (train_acc >= cfg.memorize_train_accuracy) {
        out.history.reached_memorization = true;
        break;
      }
      if (epoch + 1 >= cap) break;
    }
  }

  if (cfg.selection == SelectionRule::EarlyStopNoisyValid) {
    out.params = std::move(best_params);
    out.history.selected_epoch = best_epoch;
  } else {
    out.history.selected_epoch = out.history.epochs.back().epoch;
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (task != "graph" && task != "vision")
    throw std::invalid_argument("experiment config: task must be graph|vision");
  if (train_count < 1 || valid_count < 1 || test_count < 1)
    throw std::invalid_argument("experiment config: dataset sizes must be >= 1");
  if (ratio_grid.empty()) throw std::invalid_argument("experiment config: empty ratio grid");
  for (const double r : ratio_grid)
    if (!(r >= 0.0 && r <= 1.0))
      throw std::invalid_argument("experiment config: noise ratios must lie in [0, 1]");
  if (seeds.empty()) throw std::invalid_argument("experiment config: no seeds listed");
  if (!(probe_fraction > 0.0 && probe_fraction <= 1.0))
    throw std::invalid_argument("experiment config: probe fraction must lie in (0, 1]");
  if (task == "graph") {
    if (!is_graph_architecture(model.architecture))
      throw std::invalid_argument("experiment config: graph task needs a graph model");
    if (noise.kind != NoiseKind::None && !noise.is_regression_noise())
      throw std::invalid_argument("experiment config: graph task needs regression noise");
    if (train.loss == LossKind::CrossEntropy)
      throw std::invalid_argument("experiment config: graph task trains with mse or mae");
  } else {
    if (model.architecture != Architecture::Mlp && model.architecture != Architecture::MiniCnn)
      throw std::invalid_argument("experiment config: vision task needs mlp or mini_cnn");
    if (noise.kind != NoiseKind::None && !noise.is_classification_noise())
      throw std::invalid_argument("experiment config: vision task needs classification noise");
    if (train.loss != LossKind::CrossEntropy)
      throw std::invalid_argument("experiment config: vision task trains with cross-entropy");
  }
  train.validate();
  if (!tap_point.empty()) validate_tap_point(model, tap_point);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {{"name", cfg.name},
          {"task", cfg.task},
          {"target", target_kind_name(cfg.target)},
          {"scheme", feature_scheme_name(cfg.scheme)},
          {"image_size", cfg.image_size},
          {"num_classes", cfg.num_classes},
          {"train_count", cfg.train_count},
          {"valid_count", cfg.valid_count},
          {"test_count", cfg.test_count},
          {"data_seed", cfg.data_seed},
          {"model", model_spec_to_json(cfg.model)},
          {"noise", noise_spec_to_json(cfg.noise)},
          {"ratio_grid", cfg.ratio_grid},
          {"seeds", cfg.seeds},
          {"train", train_config_to_json(cfg.train)},
          {"probe_fraction", cfg.probe_fraction},
          {"probe_regularizer", probe_regularizer_name(cfg.probe_regularizer)},
          {"probe_lambda", cfg.probe_lambda},
          {"tap_point", cfg.tap_point},
          {"run_pca", cfg.run_pca},
          {"run_mi", cfg.run_mi},
          {"out_path", cfg.out_path}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.task = j.value("task", cfg.task);
  cfg.target = parse_target_kind(j.value("target", target_kind_name(cfg.target)));
  cfg.scheme = parse_feature_scheme(j.value("scheme", feature_scheme_name(cfg.scheme)));
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.train_count = j.value("train_count", cfg.train_count);
  cfg.valid_count = j.value("valid_count", cfg.valid_count);
  cfg.test_count = j.value("test_count", cfg.test_count);
  cfg.data_seed = j.value("data_seed", cfg.data_seed);
  if (j.contains("model")) cfg.model = model_spec_from_json(j.at("model"));
  if (j.contains("noise")) cfg.noise = noise_spec_from_json(j.at("noise"));
  cfg.ratio_grid = j.value("ratio_grid", cfg.ratio_grid);
  cfg.seeds = j.value("seeds", cfg.seeds);
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  cfg.probe_fraction = j.value("probe_fraction", cfg.probe_fraction);
  cfg.probe_regularizer = parse_probe_regularizer(
      j.value("probe_regularizer", probe_regularizer_name(cfg.probe_regularizer)));
  cfg.probe_lambda = j.value("probe_lambda", cfg.probe_lambda);
  cfg.tap_point = j.value("tap_point", cfg.tap_point);
  cfg.run_pca = j.value("run_pca", cfg.run_pca);
  cfg.run_mi = j.value("run_mi", cfg.run_mi);
  cfg.out_path = j.value("out_path", cfg.out_path);
  cfg.validate();
  return cfg;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  // The hash names the experiment, so the output path (pure plumbing — the
  // same sweep written to two files is one experiment) stays out of it.
  ExperimentConfig keyed = cfg;
  keyed.out_path.clear();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(experiment_config_to_json(keyed).dump())));
  return buf;
}

namespace {

nlohmann::json tensor_to_json(const Tensor<double>& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

Tensor<double> tensor_from_json(const nlohmann::json& j) {
  Tensor<double> t(j.at("shape").get<Shape>());
  t.data = j.at("data").get<Tensor<double>::Buffer>();
  if (t.data.size() != static_cast<std::size_t>(t.numel()))
    throw std::runtime_error("tensor payload does not match its shape");
  return t;
}

// Optional metrics are NaN in memory but must be stored as JSON null: a raw
// NaN double inside a json value breaks equality (NaN != NaN), so two dumps
// of the same record would never compare equal.
nlohmann::json json_or_null(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

nlohmann::json probe_result_to_json(const ProbeResult& p) {
  return {{"metric", p.metric},
          {"value", p.value},
          {"regularizer", probe_regularizer_name(p.regularizer)},
          {"lambda", p.lambda},
          {"rank_deficient", p.rank_deficient},
          {"ridge_fallback", p.ridge_fallback},
          {"standardized", p.standardized},
          {"tap_point", p.tap_point},
          {"probe_count", p.probe_count},
          {"test_count", p.test_count},
          {"weight", tensor_to_json(p.probe.weight)},
          {"bias", tensor_to_json(p.probe.bias)}};
}

ProbeResult probe_result_from_json(const nlohmann::json& j) {
  ProbeResult p;
  p.metric = j.at("metric").get<std::string>();
  p.value = j.at("value").get<double>();
  p.regularizer = parse_probe_regularizer(j.at("regularizer").get<std::string>());
  p.lambda = j.at("lambda").get<double>();
  p.rank_deficient = j.at("rank_deficient").get<bool>();
  p.ridge_fallback = j.at("ridge_fallback").get<bool>();
  p.standardized = j.at("standardized").get<bool>();
  p.tap_point = j.at("tap_point").get<std::string>();
  p.probe_count = j.at("probe_count").get<std::size_t>();
  p.test_count = j.at("test_count").get<std::size_t>();
  p.probe.weight = tensor_from_json(j.at("weight"));
  p.probe.bias = tensor_from_json(j.at("bias"));
  p.probe.regularizer = p.regularizer;
  p.probe.lambda = p.lambda;
  p.probe.rank_deficient = p.rank_deficient;
  return p;
}

}  // namespace

nlohmann::json run_record_to_json(const RunRecord& r) {
  return {{"config_hash", r.config_hash},
          {"task", r.task},
          {"model", r.model},
          {"noise_label", r.noise_label},
          {"noise_ratio", r.noise_ratio},
          {"seed", r.seed},
          {"status", r.status},
          {"train_losses", r.train_losses},
          {"valid_metrics", r.valid_metrics},
          {"selected_epoch", r.selected_epoch},
          {"model_test_metric", r.model_test_metric},
          {"probe", probe_result_to_json(r.probe)},
          {"pca_pc1_label_corr", json_or_null(r.pca_pc1_label_corr)},
          {"mi_noisy_clean_bits", json_or_null(r.mi_noisy_clean_bits)},
          {"wall_seconds", r.wall_seconds}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.task = j.at("task").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.noise_label = j.at("noise_label").get<std::string>();
  r.noise_ratio = j.at("noise_ratio").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.train_losses = j.at("train_losses").get<std::vector<double>>();
  r.valid_metrics = j.at("valid_metrics").get<std::vector<double>>();
  r.selected_epoch = j.at("selected_epoch").get<int>();
  r.model_test_metric = j.at("model_test_metric").get<double>();
  r.probe = probe_result_from_json(j.at("probe"));
  r.pca_pc1_label_corr = j.at("pca_pc1_label_corr").is_null()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : j.at("pca_pc1_label_corr").get<double>();
  r.mi_noisy_clean_bits = j.at("mi_noisy_clean_bits").is_null()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : j.at("mi_noisy_clean_bits").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

const char* kRunCsvHeader =
    "config_hash,task,model,noise,noise_ratio,seed,status,selected_epoch,epochs_run,"
    "final_train_loss,final_valid_metric,model_test_metric,probe_metric,probe_value,"
    "probe_rank_deficient,probe_ridge_fallback,pca_pc1_label_corr,mi_noisy_clean_bits,"
    "wall_seconds";

std::string record_csv_row(const RunRecord& r) {
  const double final_train = r.train_losses.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                    : r.train_losses.back();
  const double final_valid = r.valid_metrics.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                     : r.valid_metrics.back();
  std::string row;
  row += r.config_hash + "," + r.task + "," + r.model + ",";
  row += "\"" + r.noise_label + "\",";  // labels contain commas, e.g. gauss(10,15)@0.5
  row += format_g(r.noise_ratio) + "," + std::to_string(r.seed) + "," + r.status + ",";
  row += std::to_string(r.selected_epoch) + "," + std::to_string(r.train_losses.size()) + ",";
  row += format_g(final_train) + "," + format_g(final_valid) + ",";
  row += format_g(r.model_test_metric) + "," + r.probe.metric + "," + format_g(r.probe.value) + ",";
  row += std::string(r.probe.rank_deficient ? "1" : "0") + "," + (r.probe.ridge_fallback ? "1" : "0") + ",";
  row += format_g(r.pca_pc1_label_corr) + "," + format_g(r.mi_noisy_clean_bits) + ",";
  row += format_g(r.wall_seconds);
  return row;
}

void append_records_csv(const std::string& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open for appending: " + path);
  if (out.tellp() == std::ofstream::pos_type(0)) out << kRunCsvHeader << "\n";
  for (const RunRecord& r : records) out << record_csv_row(r) << "\n";
  if (!out) throw std::runtime_error("failed writing records: " + path);
}

void save_records_json(const std::string& path, const std::vector<RunRecord>& records) {
  nlohmann::json j;
  j["format"] = "alignlab-run-records";
  j["version"] = 1;
  nlohmann::json arr = nlohmann::json::array();
  for (const RunRecord& r : records) arr.push_back(run_record_to_json(r));
  j["records"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

std::vector<RunRecord> load_records_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "alignlab-run-records")
    throw std::runtime_error("not a run-record file: " + path);
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported run-record version: " + path);
  std::vector<RunRecord> records;
  for (const nlohmann::json& rj : j.at("records")) records.push_back(run_record_from_json(rj));
  return records;
}

namespace {

std::vector<float> gather_f(const std::vector<float>& v, const std::vector<std::size_t>& idx) {
  std::vector<float> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::int32_t> gather_i(const std::vector<std::int32_t>& v,
                                   const std::vector<std::size_t>& idx) {
  std::vector<std::int32_t> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(v[i]);
  return out;
}

Tensor<double> gather_rows_d(const Tensor<double>& X, const std::vector<std::size_t>& idx) {
  Tensor<double> out({static_cast<std::int64_t>(idx.size()), X.cols()});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::int64_t j = 0; j < X.cols(); ++j)
      out.at(static_cast<std::int64_t>(k), j) = X.at(static_cast<std::int64_t>(idx[k]), j);
  return out;
}

double pc1_label_correlation(const Tensor<double>& reps, const std::vector<double>& labels) {
  const PcaResult p = pca(reps, 1);
  const Tensor<double> proj = p.project(reps);
  std::vector<double> pc1(static_cast<std::size_t>(proj.rows()));
  for (std::int64_t i = 0; i < proj.rows(); ++i) pc1[static_cast<std::size_t>(i)] = proj.at(i, 0);
  return pearson(pc1, labels);
}

RunRecord run_graph_cell(const ExperimentConfig& cfg, const std::string& hash, std::size_t ratio_idx,
                         std::size_t seed_idx) {
  const double ratio = cfg.ratio_grid[ratio_idx];
  const std::uint64_t seed = cfg.seeds[seed_idx];
  RunRecord rec;
  rec.config_hash = hash;
  rec.task = cfg.task;
  rec.model = architecture_name(cfg.model.architecture);
  rec.noise_ratio = ratio;
  rec.seed = seed;
  NoiseSpec nspec = cfg.noise;
  nspec.noise_ratio = ratio;
  rec.noise_label = noise_spec_label(nspec);

  auto make_opts = [&](int count, int lo, int hi, std::uint64_t tag, const char* split) {
    ErOptions o;
    o.count = count;
    o.min_nodes = lo;
    o.max_nodes = hi;
    o.scheme = cfg.scheme;
    o.target = cfg.target;
    o.seed = derive_seed({cfg.data_seed, seed, tag});
    o.split_tag = split;
    return o;
  };
  const GraphDataset train_ds = generate_er_dataset(make_opts(cfg.train_count, 20, 40, 0, "train"));
  const GraphDataset valid_ds = generate_er_dataset(make_opts(cfg.valid_count, 20, 40, 1, "valid"));
  const GraphDataset test_ds = generate_er_dataset(make_opts(cfg.test_count, 50, 70, 2, "test"));

  const NoisyLabels train_noisy =
      apply_noise(train_ds, nspec, derive_seed({seed, ratio_idx, 0x6E01u}));
  const NoisyLabels valid_noisy =
      apply_noise(valid_ds, nspec, derive_seed({seed, ratio_idx, 0x6E02u}));

  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed({seed, 0x7EA1u});
  const TrainedModel tm = train_graph_model(cfg.model, train_ds, train_noisy.working, valid_ds,
                                            valid_noisy.working, tcfg);
  for (const EpochStats& e : tm.history.epochs) {
    rec.train_losses.push_back(e.train_loss);
    rec.valid_metrics.push_back(e.valid_metric);
  }
  rec.selected_epoch = tm.history.selected_epoch;

  rec.model_test_metric = mape(predict_graphs(cfg.model, tm.params, test_ds), test_ds.labels);

  const std::string tap = cfg.tap_point.empty() ? cfg.model.default_tap_point() : cfg.tap_point;
  const std::size_t probe_n = probe_subset_size(cfg.probe_fraction, train_ds.size());
  Rng probe_rng = make_rng({stream::kProbeSubset, seed});
  const std::vector<std::size_t> probe_idx = sample_indices(train_ds.size(), probe_n, probe_rng);

  const Tensor<double> test_reps = graph_representations(cfg.model, tm.params, test_ds, tap);
  Tensor<double> probe_reps;
  if (cfg.run_pca) {
    const Tensor<double> train_reps = graph_representations(cfg.model, tm.params, train_ds, tap);
    probe_reps = gather_rows_d(train_reps, probe_idx);
    std::vector<double> clean(train_ds.labels.begin(), train_ds.labels.end());
    rec.pca_pc1_label_corr = pc1_label_correlation(train_reps, clean);
  } else {
    GraphDataset probe_ds;
    probe_ds.target = train_ds.target;
    probe_ds.scheme = train_ds.scheme;
    for (const std::size_t i : probe_idx) {
      probe_ds.graphs.push_back(train_ds.graphs[i]);
      probe_ds.labels.push_back(train_ds.labels[i]);
    }
    probe_reps = graph_representations(cfg.model, tm.params, probe_ds, tap);
  }
  ProbeResult probe = probe_regression(probe_reps, gather_f(train_ds.labels, probe_idx), test_reps,
                                       test_ds.labels, cfg.probe_regularizer, cfg.probe_lambda);
  probe.tap_point = tap;
  rec.probe = std::move(probe);
  return rec;
}

RunRecord run_vision_cell(const ExperimentConfig& cfg, const std::string& hash,
                          std::size_t ratio_idx, std::size_t seed_idx) {
  const double ratio = cfg.ratio_grid[ratio_idx];
  const std::uint64_t seed = cfg.seeds[seed_idx];
  RunRecord rec;
  rec.config_hash = hash;
  rec.task = cfg.task;
  rec.model = architecture_name(cfg.model.architecture);
  rec.noise_ratio = ratio;
  rec.seed = seed;
  NoiseSpec nspec = cfg.noise;
  nspec.noise_ratio = ratio;
  rec.noise_label = noise_spec_label(nspec);

  const VisionDataset train_ds = generate_marker_dataset(
      cfg.train_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 0}), "train");
  const VisionDataset valid_ds = generate_marker_dataset(
      cfg.valid_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 1}), "valid");
  const VisionDataset test_ds = generate_marker_dataset(
      cfg.test_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 2}), "test");

  const NoisyClassLabels train_noisy = apply_class_noise(
      train_ds.labels, nspec, derive_seed({seed, ratio_idx, 0x6E01u}), &train_ds.attributes);
  const NoisyClassLabels valid_noisy = apply_class_noise(
      valid_ds.labels, nspec, derive_seed({seed, ratio_idx, 0x6E02u}), &valid_ds.attributes);

  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed({seed, 0x7EA1u});
  const TrainedModel tm = train_vision_model(cfg.model, train_ds, train_noisy.working, valid_ds,
                                             valid_noisy.working, tcfg);
  for (const EpochStats& e : tm.history.epochs) {
    rec.train_losses.push_back(e.train_loss);
    rec.valid_metrics.push_back(e.valid_metric);
  }
  rec.selected_epoch = tm.history.selected_epoch;

  rec.model_test_metric = accuracy(predict_vision(cfg.model, tm.params, test_ds), test_ds.labels);

  const std::string tap = cfg.tap_point.empty() ? cfg.model.default_tap_point() : cfg.tap_point;
  const std::size_t probe_n = probe_subset_size(cfg.probe_fraction, train_ds.size());
  Rng probe_rng = make_rng({stream::kProbeSubset, seed});
  const std::vector<std::size_t> probe_idx = sample_indices(train_ds.size(), probe_n, probe_rng);

  const Tensor<double> train_reps = vision_representations(cfg.model, tm.params, train_ds, tap);
  const Tensor<double> test_reps = vision_representations(cfg.model, tm.params, test_ds, tap);
  ProbeResult probe = probe_classification(gather_rows_d(train_reps, probe_idx),
                                           gather_i(train_ds.labels, probe_idx), test_reps,
                                           test_ds.labels, cfg.num_classes, cfg.probe_regularizer,
                                           cfg.probe_lambda);
  probe.tap_point = tap;
  rec.probe = std::move(probe);

  if (cfg.run_pca) {
    std::vector<double> clean(train_ds.labels.begin(), train_ds.labels.end());
    rec.pca_pc1_label_corr = pc1_label_correlation(train_reps, clean);
  }
  if (cfg.run_mi)
    rec.mi_noisy_clean_bits = mutual_information(train_noisy.working, train_noisy.clean).bits;
  return rec;
}

RunRecord run_one_cell(const ExperimentConfig& cfg, const std::string& hash, std::size_t ratio_idx,
                       std::size_t seed_idx) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  try {
    rec = cfg.task == "graph" ? run_graph_cell(cfg, hash, ratio_idx, seed_idx)
                              : run_vision_cell(cfg, hash, ratio_idx, seed_idx);
  } catch (const std::exception& e) {
    rec.config_hash = hash;
    rec.task = cfg.task;
    rec.model = architecture_name(cfg.model.architecture);
    rec.noise_ratio = cfg.ratio_grid[ratio_idx];
    rec.seed = cfg.seeds[seed_idx];
    NoiseSpec nspec = cfg.noise;
    nspec.noise_ratio = rec.noise_ratio;
    rec.noise_label = noise_spec_label(nspec);
    rec.status = std::string("failed: ") + e.what();
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  struct Cell {
    std::size_t ratio_idx, seed_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t ri = 0; ri < cfg.ratio_grid.size(); ++ri)
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) cells.push_back({ri, si});

  std::vector<RunRecord> records(cells.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
  if (workers == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c)
      records[c] = run_one_cell(cfg, hash, cells[c].ratio_idx, cells[c].seed_idx);
  } else {
    std::atomic<std::size_t> next{0};
    auto pull = [&] {
      while (true) {
        const std::size_t c = next.fetch_add(1);
        if (c >= cells.size()) return;
        records[c] = run_one_cell(cfg, hash, cells[c].ratio_idx, cells[c].seed_idx);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(pull);
    for (std::thread& t : pool) t.join();
  }

  if (!cfg.out_path.empty()) append_records_csv(cfg.out_path, records);
  return records;
}

namespace {

Tensor<float> draw_normal(std::int64_t rows, std::int64_t cols, double scale, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<float> t({rows, cols});
  for (auto& v : t.data) v = static_cast<float>(scale * d(rng));
  return t;
}

struct Standardizer {
  std::vector<double> mean, stddev;

  static Standardizer fit(const Tensor<double>& X) {
    Standardizer s;
    const std::int64_t n = X.rows(), d = X.cols();
    s.mean.assign(static_cast<std::size_t>(d), 0.0);
    s.stddev.assign(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::int64_t i = 0; i < n; ++i) m += X.at(i, j);
      m /= static_cast<double>(n);
      double var = 0.0;
      for (std::int64_t i = 0; i < n; ++i) var += (X.at(i, j) - m) * (X.at(i, j) - m);
      var /= static_cast<double>(n);
      s.mean[static_cast<std::size_t>(j)] = m;
      s.stddev[static_cast<std::size_t>(j)] = std::sqrt(std::max(var, 1e-12));
    }
    return s;
  }

  void apply(Tensor<double>& X) const {
    for (std::int64_t i = 0; i < X.rows(); ++i)
      for (std::int64_t j = 0; j < X.cols(); ++j)
        X.at(i, j) = (X.at(i, j) - mean[static_cast<std::size_t>(j)]) /
                     stddev[static_cast<std::size_t>(j)];
  }
};

// relu(X W1 + b1) W2 + b2, evaluated in double.
Tensor<double> two_layer_map(const Tensor<double>& X, const Tensor<float>& W1, const Tensor<float>& b1,
                             const Tensor<float>& W2, const Tensor<float>& b2) {
  const std::int64_t n = X.rows(), hidden = W1.cols(), out = W2.cols();
  Tensor<double> H({n, hidden});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < hidden; ++j) {
      double acc = static_cast<double>(b1.at(0, j));
      for (std::int64_t k = 0; k < X.cols(); ++k)
        acc += X.at(i, k) * static_cast<double>(W1.at(k, j));
      H.at(i, j) = std::max(acc, 0.0);
    }
  Tensor<double> Y({n, out});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < out; ++j) {
      double acc = static_cast<double>(b2.at(0, j));
      for (std::int64_t k = 0; k < hidden; ++k)
        acc += H.at(i, k) * static_cast<double>(W2.at(k, j));
      Y.at(i, j) = acc;
    }
  return Y;
}

Tensor<double> matvec_cols(const Tensor<double>& X, const std::vector<double>& w) {
  Tensor<double> y({X.rows(), 1});
  for (std::int64_t i = 0; i < X.rows(); ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < X.cols(); ++j) acc += X.at(i, j) * w[static_cast<std::size_t>(j)];
    y.at(i, 0) = acc;
  }
  return y;
}

double rmse(const Tensor<double>& pred, const Tensor<double>& truth) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - truth.data[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.data.size()));
}

// Mini-batch Adam regression of a small MLP onto multi-dim targets; the tape
// carries whole batches here since the inputs are flat rows.
ModelParams train_mlp_regression(const ModelSpec& spec, const Tensor<float>& X,
                                 const Tensor<float>& Y, int epochs, int batch_size, double lr,
                                 std::uint64_t seed) {
  ModelParams params = init_params(spec, seed);
  ModelParams grads = params.zeros_like();
  Adam<float> adam({lr, 0.9, 0.999, 1e-8, 0.0});
  const auto param_ptrs = tensor_ptrs(params);
  const auto grad_ptrs = tensor_cptrs(grads);
  const std::size_t n = static_cast<std::size_t>(X.rows());
  std::vector<std::size_t> order = identity_order(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng = make_rng({stream::kShuffle, seed, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
      grads.set_zero();
      Tape<float> tape;
      BoundModel<float> m = bind_model(tape, spec, params, &grads);
      Tape<float>::Val in = tape.constant(slice_rows(X, order, start, end));
      ForwardOut<float> f = forward_mlp(tape, m, in);
      Tape<float>::Val loss = tape.mse_loss(f.prediction, slice_rows(Y, order, start, end));
      tape.backward(loss, 1.0f);
      if (!std::isfinite(static_cast<double>(tape.value(loss).data[0])))
        diverged("shared-feature sub-network", epoch, batch_index);
      adam.step(param_ptrs, grad_ptrs);
      ++batch_index;
    }
  }
  return params;
}

}  // namespace

void SharedFeatureScenario::validate() const {
  if (input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("shared-feature: bad dims");
  if (feature_dim <= 1)
    throw std::invalid_argument("shared-feature: feature dim must exceed the 1-dim output");
  if (clean_probe_count <= feature_dim)
    throw std::invalid_argument(
        "shared-feature: clean probe set must exceed the feature dimension");
  if (train_count < 1 || test_count < 1) throw std::invalid_argument("shared-feature: bad counts");
  if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0))
    throw std::invalid_argument("shared-feature: noise ratio must lie in [0, 1]");
  if (!(epsilon > 0.0)) throw std::invalid_argument("shared-feature: epsilon must be positive");
  if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0))
    throw std::invalid_argument("shared-feature: bad training parameters");
}

SharedFeatureReport run_shared_feature_scenario(const SharedFeatureScenario& s) {
  s.validate();

  // Inputs for the three splits.
  Rng xrng = make_rng({0x5CE9u, s.seed, 0});
  auto draw_inputs = [&](int n) {
    Tensor<double> X({n, s.input_dim});
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& v : X.data) v = d(xrng);
    return X;
  };
  const Tensor<double> X_train = draw_inputs(s.train_count);
  const Tensor<double> X_probe = draw_inputs(s.clean_probe_count);
  const Tensor<double> X_test = draw_inputs(s.test_count);

  // Frozen feature map h and the two heads on top of it.
  Rng hrng = make_rng({0x5CE9u, s.seed, 1});
  const Tensor<float> W1 = draw_normal(s.input_dim, s.hidden_dim, 1.0 / std::sqrt(s.input_dim), hrng);
  const Tensor<float> b1 = draw_normal(1, s.hidden_dim, 0.1, hrng);
  const Tensor<float> W2 = draw_normal(s.hidden_dim, s.feature_dim, 1.0 / std::sqrt(s.hidden_dim), hrng);
  const Tensor<float> b2 = draw_normal(1, s.feature_dim, 0.1, hrng);
  Tensor<double> H_train = two_layer_map(X_train, W1, b1, W2, b2);
  Tensor<double> H_probe = two_layer_map(X_probe, W1, b1, W2, b2);
  Tensor<double> H_test = two_layer_map(X_test, W1, b1, W2, b2);
  const Standardizer hstd = Standardizer::fit(H_train);
  hstd.apply(H_train);
  hstd.apply(H_probe);
  hstd.apply(H_test);

  std::normal_distribution<double> nd(0.0, 1.0);
  const double wscale = 1.0 / std::sqrt(static_cast<double>(s.feature_dim));
  std::vector<double> w_f(static_cast<std::size_t>(s.feature_dim));
  std::vector<double> w_g(static_cast<std::size_t>(s.feature_dim));
  std::vector<double> w_q(static_cast<std::size_t>(s.feature_dim));
  for (auto& v : w_f) v = wscale * nd(hrng);
  for (auto& v : w_g) v = wscale * nd(hrng);
  for (auto& v : w_q) v = wscale * nd(hrng);

  auto target_labels = [&](const Tensor<double>& H) { return matvec_cols(H, w_f); };
  auto noise_labels = [&](const Tensor<double>& H) {
    if (s.noise_equals_target) return target_labels(H);
    const Tensor<double> a = matvec_cols(H, w_g);
    const Tensor<double> b = matvec_cols(H, w_q);
    Tensor<double> g({H.rows(), 1});
    for (std::int64_t i = 0; i < H.rows(); ++i)
      g.at(i, 0) = std::sin(3.0 * a.at(i, 0)) + std::max(b.at(i, 0), 0.0);
    return g;
  };

  Tensor<double> y_train = target_labels(H_train);
  Tensor<double> y_probe = target_labels(H_probe);
  Tensor<double> y_test = target_labels(H_test);
  const Standardizer ystd = Standardizer::fit(y_train);
  ystd.apply(y_train);
  ystd.apply(y_probe);
  ystd.apply(y_test);

  Tensor<double> g_train = noise_labels(H_train);
  const Standardizer gstd = Standardizer::fit(g_train);
  gstd.apply(g_train);

  // Corrupted subset: same draw discipline as the dataset noise.
  const std::size_t k = corruption_count(s.noise_ratio, static_cast<std::size_t>(s.train_count));
  Rng crng = make_rng({stream::kNoise, s.seed});
  const std::vector<std::size_t> corrupted =
      sample_indices(static_cast<std::size_t>(s.train_count), k, crng);
  Tensor<double> mixture = y_train;
  for (const std::size_t i : corrupted)
    mixture.at(static_cast<std::int64_t>(i), 0) = g_train.at(static_cast<std::int64_t>(i), 0);

  // One arm of the comparison: sequential training (sub-network regresses the
  // shared feature labels, which every example carries regardless of
  // corruption; only the linear head sees the given labels), then a probe on
  // the sub-network output from the clean set.
  const ModelSpec sub_spec = mlp_spec(s.input_dim, {s.hidden_dim}, s.feature_dim);
  const Tensor<float> Xf_train = X_train.cast<float>();
  const Tensor<float> Hf_train = H_train.cast<float>();
  auto run_arm = [&](const Tensor<double>& labels, double* head_error) {
    const ModelParams sub_params = train_mlp_regression(
        sub_spec, Xf_train, Hf_train, s.epochs, s.batch_size, s.learning_rate, s.seed);
    const Tensor<double> hhat_train =
        infer_batch(sub_spec, sub_params, Xf_train).prediction.cast<double>();
    const Tensor<double> hhat_probe =
        infer_batch(sub_spec, sub_params, X_probe.cast<float>()).prediction.cast<double>();
    const Tensor<double> hhat_test =
        infer_batch(sub_spec, sub_params, X_test.cast<float>()).prediction.cast<double>();
    const LinearProbe head = fit_linear_probe(hhat_train, labels, ProbeRegularizer::Ols);
    *head_error = rmse(head.predict(hhat_test), y_test);
    const LinearProbe probe = fit_linear_probe(hhat_probe, y_probe, ProbeRegularizer::Ols);
    return rmse(probe.predict(hhat_test), y_test);
  };

  SharedFeatureReport report;
  report.probe_error_noisy = run_arm(mixture, &report.head_error_noisy);
  report.probe_error_clean = run_arm(y_train, &report.head_error_clean);
  report.passed = report.probe_error_noisy <= report.probe_error_clean + s.epsilon;
  return report;
}

}  // namespace alignlab
