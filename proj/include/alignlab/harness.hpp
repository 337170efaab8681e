#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include <alignlab/graphs.hpp>
#include <alignlab/models.hpp>
#include <alignlab/noise.hpp>
#include <alignlab/probe.hpp>
#include <alignlab/vision.hpp>

namespace alignlab {

enum class LossKind { Mse, Mae, CrossEntropy };
const char* loss_kind_name(LossKind k);
LossKind parse_loss_kind(const std::string& name);

// How the reported parameters are chosen from the epoch history.
enum class SelectionRule { EarlyStopNoisyValid, LastEpoch };
const char* selection_rule_name(SelectionRule r);
SelectionRule parse_selection_rule(const std::string& name);

struct TrainConfig {
  LossKind loss = LossKind::Mse;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplicative factor in (0, 1]
  double weight_decay = 0.0;
  SelectionRule selection = SelectionRule::EarlyStopNoisyValid;
  std::uint64_t seed = 0;
  // Classification-only memorization rule: keep training past `epochs` until
  // train accuracy on the working labels reaches this percentage (both the
  // epoch budget and the threshold must be met). <= 0 disables the rule.
  double memorize_train_accuracy = -1.0;
  // Hard stop for the memorization rule; 0 means 4x epochs.
  int epoch_cap = 0;

  int effective_epoch_cap() const;
  void validate() const;
};
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  // Mean loss on the noisy validation set for regression; error percentage
  // (100 - accuracy) for classification. Lower is better in both cases.
  double valid_metric = 0.0;
  double train_accuracy = -1.0;  // percent; classification only
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int selected_epoch = -1;
  bool reached_memorization = false;
};

struct TrainedModel {
  ModelSpec spec;
  ModelParams params;
  TrainHistory history;
};

// Mini-batch Adam on per-example tapes with gradient accumulation; labels are
// the working (possibly corrupted) copies. Throws on non-finite loss, naming
// the epoch and batch.
TrainedModel train_graph_model(const ModelSpec& spec, const GraphDataset& train,
                               const std::vector<float>& train_labels, const GraphDataset& valid,
                               const std::vector<float>& valid_labels, const TrainConfig& cfg);

// Batched cross-entropy training for the image models. MLPs consume flattened
// pixels; the CNN consumes [B, H, W, 3] directly.
TrainedModel train_vision_model(const ModelSpec& spec, const VisionDataset& train,
                                const std::vector<std::int32_t>& train_labels,
                                const VisionDataset& valid,
                                const std::vector<std::int32_t>& valid_labels,
                                const TrainConfig& cfg);

std::vector<float> predict_graphs(const ModelSpec& spec, const ModelParams& params,
                                  const GraphDataset& ds);
Tensor<double> graph_representations(const ModelSpec& spec, const ModelParams& params,
                                     const GraphDataset& ds, const std::string& tap_point);
std::vector<std::int32_t> predict_vision(const ModelSpec& spec, const ModelParams& params,
                                         const VisionDataset& ds);
Tensor<double> vision_representations(const ModelSpec& spec, const ModelParams& params,
                                      const VisionDataset& ds, const std::string& tap_point);
double mean_loss(const std::vector<float>& predictions, const std::vector<float>& labels,
                 LossKind loss);

struct ExperimentConfig {
  std::string name = "experiment";
  std::string task = "graph";  // "graph" | "vision"

  // Graph task.
  TargetKind target = TargetKind::MaxDegree;
  FeatureScheme scheme = FeatureScheme::Uniform1To100;
  // Vision task.
  int image_size = 16;
  int num_classes = 10;

  int train_count = 2000;
  int valid_count = 500;
  int test_count = 2000;
  std::uint64_t data_seed = 1;

  ModelSpec model = graph_model_spec(Architecture::MaxSumGnn);
  NoiseSpec noise;  // ratio field is overridden by each grid point
  std::vector<double> ratio_grid{0.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;

  double probe_fraction = 0.1;  // clean-labeled fraction of the train set
  ProbeRegularizer probe_regularizer = ProbeRegularizer::Ols;
  double probe_lambda = 1.0;
  std::string tap_point;  // empty -> model default

  bool run_pca = false;
  bool run_mi = false;
  std::string out_path;  // optional CSV append target

  void validate() const;
};
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON serialization, as a 16-digit hex string.
std::string config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);

// Uniform subset draw (partial Fisher-Yates, returned sorted) and the probe
// subset sizing rule; exposed so external tooling can reproduce the exact
// clean-labeled subset a sweep cell used.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, Rng& rng);
std::size_t probe_subset_size(double fraction, std::size_t n);

// One (noise ratio, seed) cell. Raw metrics use clean test labels; the probe
// fits on a clean-labeled train subset and is scored on the test set.
struct RunRecord {
  std::string config_hash;
  std::string task;
  std::string model;
  std::string noise_label;
  double noise_ratio = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" | "failed: <reason>"

  std::vector<double> train_losses;   // per epoch
  std::vector<double> valid_metrics;  // per epoch, lower is better
  int selected_epoch = -1;

  double model_test_metric = 0.0;  // MAPE % (regression) or accuracy % (classification)
  ProbeResult probe;
  double pca_pc1_label_corr = std::numeric_limits<double>::quiet_NaN();
  double mi_noisy_clean_bits = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};
nlohmann::json run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

// Runs every (ratio, seed) cell, optionally on a worker pool. Each cell owns
// its RNG streams, so reported numbers do not depend on the thread count. A
// failing cell is recorded with a "failed:" status; the others complete.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int threads = 1);

// Append-only CSV store (header written when the file is new). Schema:
//   config_hash,task,model,noise,noise_ratio,seed,status,selected_epoch,
//   epochs_run,final_train_loss,final_valid_metric,model_test_metric,
//   probe_metric,probe_value,probe_rank_deficient,probe_ridge_fallback,
//   pca_pc1_label_corr,mi_noisy_clean_bits,wall_seconds
extern const char* kRunCsvHeader;
void append_records_csv(const std::string& path, const std::vector<RunRecord>& records);
std::string record_csv_row(const RunRecord& r);

void save_records_json(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> load_records_json(const std::string& path);

// Shared-feature scenario: the target f_r(h(x)) is linear in a fixed random
// feature map h, and the noise g_r(h(x)) is nonlinear in the same h. The
// aligned network is trained sequentially: its sub-network regresses onto
// h-labels (which clean and corrupted examples share, by construction), and
// only the linear head ever sees the noisy mixture. The probe then refits a
// linear map on the sub-network's output from a small clean set.
struct SharedFeatureScenario {
  int input_dim = 8;
  int feature_dim = 16;  // d; must exceed the 1-dim output
  int hidden_dim = 64;
  int train_count = 2000;
  int clean_probe_count = 200;  // must exceed feature_dim
  int test_count = 1000;
  double noise_ratio = 0.8;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 1e-3;
  // Diagnostic switch: make the noise head equal the target head, so the
  // mixture degenerates to clean labels at every ratio.
  bool noise_equals_target = false;

  void validate() const;
};

struct SharedFeatureReport {
  // Probe RMSE on held-out clean labels (labels standardized to unit variance,
  // so 0.05 is 5% of a standard deviation).
  double probe_error_noisy = 0.0;
  double probe_error_clean = 0.0;
  // Raw head RMSE, the dotted-line analogue: unlike the probe, the head is
  // fit on corrupted labels and does degrade with the ratio.
  double head_error_noisy = 0.0;
  double head_error_clean = 0.0;
  bool passed = false;
};

SharedFeatureReport run_shared_feature_scenario(const SharedFeatureScenario& s);

}  // namespace alignlab
