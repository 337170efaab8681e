#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <alignlab/tensor.hpp>

namespace alignlab {

enum class ProbeRegularizer { Ols, Ridge };

std::string probe_regularizer_name(ProbeRegularizer r);

// A fitted linear readout on representations. Weight is [rep_dim, out_dim];
// bias [1, out_dim] is always unpenalized.
struct LinearProbe {
  Tensor<double> weight;
  Tensor<double> bias;
  ProbeRegularizer regularizer = ProbeRegularizer::Ols;
  double lambda = 0.0;
  // OLS on a rank-deficient system: the SVD solve returns the minimum-norm
  // solution and this flag records that it happened.
  bool rank_deficient = false;

  Tensor<double> predict(const Tensor<double>& reps) const;
};

// Least-squares fit of targets on [reps, 1]. OLS uses an SVD (minimum-norm on
// rank deficiency); ridge solves the centered normal equations
// (Xc'Xc + lambda I) w = Xc' yc, leaving the bias unpenalized.
LinearProbe fit_linear_probe(const Tensor<double>& reps, const Tensor<double>& targets,
                             ProbeRegularizer reg, double lambda = 1.0);

// 100 * mean(|p - t| / max(|t|, 1e-8)). Throws on empty or mismatched input.
double mape(const std::vector<double>& predictions, const std::vector<double>& truths);
double mape(const std::vector<float>& predictions, const std::vector<float>& truths);

// 100 * fraction of equal entries. Throws on empty or mismatched input.
double accuracy(const std::vector<std::int32_t>& predicted, const std::vector<std::int32_t>& truth);

struct ProbeResult {
  std::string metric;  // "mape_percent" | "accuracy_percent" | "mse"
  double value = 0.0;
  ProbeRegularizer regularizer = ProbeRegularizer::Ols;
  double lambda = 0.0;
  bool rank_deficient = false;
  // Probe set smaller than rep_dim + 1 cannot support OLS; the fit fell back
  // to ridge(1).
  bool ridge_fallback = false;
  bool standardized = false;  // raw representations are fed to the probe
  std::string tap_point;
  std::size_t probe_count = 0;
  std::size_t test_count = 0;
  LinearProbe probe;
};

// Fit on (probe_reps, probe_labels), evaluate MAPE of predictions against the
// clean test labels. Test labels are never visible to the fitting step.
ProbeResult probe_regression(const Tensor<double>& probe_reps, const std::vector<float>& probe_labels,
                             const Tensor<double>& test_reps, const std::vector<float>& test_labels,
                             ProbeRegularizer reg = ProbeRegularizer::Ols, double lambda = 1.0);

// One-hot least squares; prediction = argmax of the regression output.
ProbeResult probe_classification(const Tensor<double>& probe_reps,
                                 const std::vector<std::int32_t>& probe_labels,
                                 const Tensor<double>& test_reps,
                                 const std::vector<std::int32_t>& test_labels, int num_classes,
                                 ProbeRegularizer reg = ProbeRegularizer::Ridge, double lambda = 1.0);

std::vector<std::int32_t> argmax_rows(const Tensor<double>& scores);

// Representation dumps: row-major little-endian float32 binary plus a JSON
// sidecar at <path>.json carrying row count, dim, tap point, and model hash.
void save_representations(const std::string& path, const Tensor<float>& reps,
                          const std::string& tap_point, const std::string& model_hash);
Tensor<float> load_representations(const std::string& path, std::string* tap_point = nullptr,
                                   std::string* model_hash = nullptr);

}  // namespace alignlab
