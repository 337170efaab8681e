#include <alignlab/analysis.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace alignlab {

Tensor<double> PcaResult::project(const Tensor<double>& X) const {
  if (X.ndim() != 2 || X.cols() != components.cols())
    throw std::invalid_argument("pca project: dim mismatch");
  Tensor<double> out({X.rows(), components.rows()});
  out.mat() = (X.mat().rowwise() - mean.mat().row(0)) * components.mat().transpose();
  return out;
}

PcaResult pca(const Tensor<double>& X, int k) {
  if (X.ndim() != 2) throw std::invalid_argument("pca: need a 2-d matrix");
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) throw std::invalid_argument("pca: need at least 2 rows");
  if (k < 1 || k > d)
    throw std::invalid_argument("pca: k=" + std::to_string(k) + " outside [1," + std::to_string(d) + "]");

  Eigen::MatrixXd M = X.mat();
  Eigen::RowVectorXd mu = M.colwise().mean();
  Eigen::MatrixXd C = M.rowwise() - mu;
  Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");
  // Ascending eigenvalues from the solver; take the top k in descending order.
  const double total = std::max(cov.trace(), 0.0);

  PcaResult res;
  res.components = Tensor<double>({k, d});
  res.mean = Tensor<double>({1, d});
  res.mean.mat().row(0) = mu;
  for (int i = 0; i < k; ++i) {
    const Eigen::Index src = d - 1 - i;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;  // deterministic sign: largest-magnitude entry positive
    res.components.mat().row(i) = v.transpose();
    const double ev = std::max(eig.eigenvalues()(src), 0.0);
    res.explained_variance.push_back(ev);
    res.explained_variance_ratio.push_back(total > 0 ? ev / total : 0.0);
  }
  return res;
}

namespace {

// Compact re-indexing of arbitrary discrete labels.
std::vector<int> compact_codes(const std::vector<std::int32_t>& v, int* bins) {
  std::map<std::int32_t, int> code;
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto [it, _] = code.try_emplace(v[i], static_cast<int>(code.size()));
    out[i] = it->second;
  }
  *bins = static_cast<int>(code.size());
  return out;
}

}  // namespace

MiEstimate mutual_information(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  if (a.empty() || a.size() != b.size())
    throw std::invalid_argument("mutual_information: need equal-length non-empty inputs");
  MiEstimate est;
  est.samples = a.size();
  std::vector<int> ca = compact_codes(a, &est.a_bins), cb = compact_codes(b, &est.b_bins);

  std::vector<double> joint(static_cast<std::size_t>(est.a_bins) * est.b_bins, 0.0);
  std::vector<double> pa(est.a_bins, 0.0), pb(est.b_bins, 0.0);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<std::size_t>(ca[i]) * est.b_bins + cb[i]] += inv;
    pa[ca[i]] += inv;
    pb[cb[i]] += inv;
  }
  double mi = 0.0;
  for (int i = 0; i < est.a_bins; ++i)
    for (int j = 0; j < est.b_bins; ++j) {
      const double p = joint[static_cast<std::size_t>(i) * est.b_bins + j];
      if (p > 0.0) mi += p * std::log2(p / (pa[i] * pb[j]));
    }
  est.bits = std::max(mi, 0.0);
  return est;
}

double entropy_bits(const std::vector<std::int32_t>& labels) {
  if (labels.empty()) throw std::invalid_argument("entropy_bits: empty input");
  int bins = 0;
  std::vector<int> c = compact_codes(labels, &bins);
  std::vector<double> p(bins, 0.0);
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (int code : c) p[code] += inv;
  double h = 0.0;
  for (double q : p)
    if (q > 0.0) h -= q * std::log2(q);
  return h;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2 || x.size() != y.size())
    throw std::invalid_argument("pearson: need equal-length inputs with >= 2 entries");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero-variance input");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2 || x.size() != y.size())
    throw std::invalid_argument("spearman: need equal-length inputs with >= 2 entries");
  return pearson(average_ranks(x), average_ranks(y));
}

Aggregate mean_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_std: empty input");
  Aggregate a;
  a.n = values.size();
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

Aggregate aggregate_runs(const std::vector<RunMetric>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate_runs: empty input");
  std::vector<double> values;
  values.reserve(records.size());
  for (const RunMetric& r : records) {
    if (r.config_signature != records.front().config_signature)
      throw std::invalid_argument("aggregate_runs: mixed configurations ('" +
                                  records.front().config_signature + "' vs '" + r.config_signature +
                                  "')");
    values.push_back(r.value);
  }
  return mean_std(values);
}

SampleComplexityCurve estimate_sample_complexity(
    const std::vector<int>& sizes, int seeds, double threshold, bool higher_is_better,
    const std::function<double(int size, int seed_index)>& trial_metric, double delta) {
  if (sizes.empty()) throw std::invalid_argument("estimate_sample_complexity: empty size grid");
  if (!std::is_sorted(sizes.begin(), sizes.end()) ||
      std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end())
    throw std::invalid_argument("estimate_sample_complexity: sizes must be strictly increasing");
  if (seeds < 1) throw std::invalid_argument("estimate_sample_complexity: need >= 1 seed");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("estimate_sample_complexity: delta must lie in (0,1)");

  SampleComplexityCurve out;
  out.sizes = sizes;
  out.threshold = threshold;
  out.higher_is_better = higher_is_better;
  out.delta = delta;
  out.open_ended = true;

  for (int size : sizes) {
    std::vector<double> row;
    int successes = 0;
    for (int s = 0; s < seeds; ++s) {
      const double m = trial_metric(size, s);
      row.push_back(m);
      successes += higher_is_better ? m >= threshold : m <= threshold;
    }
    out.metrics.push_back(std::move(row));
    // Strictly more than (1-delta)*seeds successes: delta=1/3 over 3 seeds
    // demands all three.
    if (out.open_ended && static_cast<double>(successes) > (1.0 - delta) * seeds) {
      out.estimated_size = size;
      out.open_ended = false;
    }
  }
  return out;
}

}  // namespace alignlab
