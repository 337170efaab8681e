#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <alignlab/tensor.hpp>

namespace alignlab {

// Principal components of a representation matrix. `components` rows are
// orthonormal, ordered by decreasing explained variance; the deterministic
// sign convention makes each row's largest-magnitude entry positive.
struct PcaResult {
  Tensor<double> components;                     // [k, dim]
  std::vector<double> explained_variance;        // top-k covariance eigenvalues
  std::vector<double> explained_variance_ratio;  // against total variance
  Tensor<double> mean;                           // [1, dim]

  // Projects rows of X (mean-centered) onto the components: [n, k].
  Tensor<double> project(const Tensor<double>& X) const;
};

// Covariance eigendecomposition in double precision (representations are at
// most a few hundred dimensions wide; no iterative solver needed).
PcaResult pca(const Tensor<double>& X, int k);

struct MiEstimate {
  double bits = 0.0;
  int a_bins = 0;
  int b_bins = 0;
  std::size_t samples = 0;
};

// Plug-in mutual information of two discrete label vectors, in bits, from the
// joint empirical histogram. No bias correction (sample counts here are far
// larger than the number of label-pair cells).
MiEstimate mutual_information(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b);

// Plug-in entropy in bits, for test identities like MI(x,x) = H(x).
double entropy_bits(const std::vector<std::int32_t>& labels);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Rank correlation with average ranks on ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1); 0 for a single run
  std::size_t n = 0;
};

Aggregate mean_std(const std::vector<double>& values);

// A scalar outcome of one run plus the signature of the configuration that
// produced it (everything but the seed).
struct RunMetric {
  std::string config_signature;
  double value = 0.0;
};

// Mean +- sample std over runs; refuses to average across different configs.
Aggregate aggregate_runs(const std::vector<RunMetric>& records);

struct SampleComplexityCurve {
  std::vector<int> sizes;                    // strictly increasing
  std::vector<std::vector<double>> metrics;  // [size][seed]
  double threshold = 0.0;
  bool higher_is_better = true;
  double delta = 1.0 / 3.0;
  int estimated_size = -1;  // smallest size whose success count beats 1-delta
  bool open_ended = false;  // no tested size reached the threshold
};

// Runs `trial_metric(size, seed_index)` over the grid and finds the smallest
// size whose success count strictly exceeds (1-delta)*seeds — at the default
// delta=1/3 with 3 seeds that means all three runs must clear the threshold.
SampleComplexityCurve estimate_sample_complexity(
    const std::vector<int>& sizes, int seeds, double threshold, bool higher_is_better,
    const std::function<double(int size, int seed_index)>& trial_metric, double delta = 1.0 / 3.0);

}  // namespace alignlab
