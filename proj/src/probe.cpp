#include <alignlab/probe.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

namespace alignlab {

namespace {

Eigen::MatrixXd to_eigen(const Tensor<double>& t) {
  if (t.ndim() != 2) throw std::invalid_argument("probe: expected a 2-d matrix, have " + shape_str(t.shape));
  return t.mat();
}

Tensor<double> from_eigen(const Eigen::MatrixXd& m) {
  Tensor<double> t({m.rows(), m.cols()});
  t.mat() = m;
  return t;
}

}  // namespace

std::string probe_regularizer_name(ProbeRegularizer r) {
  return r == ProbeRegularizer::Ols ? "ols" : "ridge";
}

Tensor<double> LinearProbe::predict(const Tensor<double>& reps) const {
  Eigen::MatrixXd X = to_eigen(reps);
  if (X.cols() != weight.rows())
    throw std::invalid_argument("probe predict: rep dim " + std::to_string(X.cols()) +
                                " does not match fitted dim " + std::to_string(weight.rows()));
  Eigen::MatrixXd Y = X * weight.mat();
  Y.rowwise() += bias.mat().row(0);
  return from_eigen(Y);
}

LinearProbe fit_linear_probe(const Tensor<double>& reps, const Tensor<double>& targets,
                             ProbeRegularizer reg, double lambda) {
  Eigen::MatrixXd X = to_eigen(reps);
  Eigen::MatrixXd Y = to_eigen(targets);
  if (X.rows() != Y.rows())
    throw std::invalid_argument("fit_linear_probe: " + std::to_string(X.rows()) + " rows of reps vs " +
                                std::to_string(Y.rows()) + " rows of targets");
  if (X.rows() < 1) throw std::invalid_argument("fit_linear_probe: empty input");

  const Eigen::Index d = X.cols(), m = Y.cols();
  LinearProbe probe;
  probe.regularizer = reg;

  if (reg == ProbeRegularizer::Ols) {
    Eigen::MatrixXd A(X.rows(), d + 1);
    A.leftCols(d) = X;
    A.col(d).setOnes();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd beta = svd.solve(Y);  // minimum-norm on rank deficiency
    probe.rank_deficient = svd.rank() < d + 1;
    probe.weight = from_eigen(beta.topRows(d));
    probe.bias = from_eigen(beta.bottomRows(1));
    probe.lambda = 0.0;
  } else {
    if (!(lambda > 0.0)) throw std::invalid_argument("fit_linear_probe: ridge needs lambda > 0");
    // Unpenalized bias: center, solve the regularized normal equations, then
    // recover the intercept from the means.
    Eigen::RowVectorXd x_mean = X.colwise().mean();
    Eigen::RowVectorXd y_mean = Y.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - x_mean;
    Eigen::MatrixXd Yc = Y.rowwise() - y_mean;
    Eigen::MatrixXd G = Xc.transpose() * Xc;
    G.diagonal().array() += lambda;
    Eigen::MatrixXd W = G.ldlt().solve(Xc.transpose() * Yc);
    probe.weight = from_eigen(W);
    probe.bias = from_eigen(y_mean - x_mean * W);
    probe.lambda = lambda;
  }

  if (!probe.weight.all_finite() || !probe.bias.all_finite())
    throw std::runtime_error("fit_linear_probe: non-finite coefficients");
  return probe;
}

namespace {

template <typename T>
double mape_impl(const std::vector<T>& p, const std::vector<T>& t) {
  if (p.empty() || p.size() != t.size())
    throw std::invalid_argument("mape: need equal-length non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double denom = std::max(std::abs(static_cast<double>(t[i])), 1e-8);
    sum += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i])) / denom;
  }
  return 100.0 * sum / static_cast<double>(p.size());
}

}  // namespace

double mape(const std::vector<double>& predictions, const std::vector<double>& truths) {
  return mape_impl(predictions, truths);
}

double mape(const std::vector<float>& predictions, const std::vector<float>& truths) {
  return mape_impl(predictions, truths);
}

double accuracy(const std::vector<std::int32_t>& predicted, const std::vector<std::int32_t>& truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: need equal-length non-empty inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predicted.size());
}

std::vector<std::int32_t> argmax_rows(const Tensor<double>& scores) {
  if (scores.ndim() != 2) throw std::invalid_argument("argmax_rows: need a 2-d matrix");
  std::vector<std::int32_t> out(static_cast<std::size_t>(scores.rows()));
  for (std::int64_t i = 0; i < scores.rows(); ++i) {
    std::int32_t best = 0;
    for (std::int64_t j = 1; j < scores.cols(); ++j)
      if (scores.at(i, j) > scores.at(i, best)) best = static_cast<std::int32_t>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

namespace {

// Shared fitting policy: OLS demands probe rows >= dim + 1; otherwise fall
// back to ridge(1) and record it.
LinearProbe fit_with_fallback(const Tensor<double>& reps, const Tensor<double>& targets,
                              ProbeRegularizer reg, double lambda, bool* fell_back) {
  *fell_back = false;
  if (reg == ProbeRegularizer::Ols && reps.rows() < reps.cols() + 1) {
    std::fprintf(stderr,
                 "[probe] warning: %lld probe rows < rep dim %lld + 1; falling back to ridge(1)\n",
                 static_cast<long long>(reps.rows()), static_cast<long long>(reps.cols()));
    *fell_back = true;
    return fit_linear_probe(reps, targets, ProbeRegularizer::Ridge, 1.0);
  }
  return fit_linear_probe(reps, targets, reg, lambda);
}

}  // namespace

ProbeResult probe_regression(const Tensor<double>& probe_reps, const std::vector<float>& probe_labels,
                             const Tensor<double>& test_reps, const std::vector<float>& test_labels,
                             ProbeRegularizer reg, double lambda) {
  if (static_cast<std::size_t>(probe_reps.rows()) != probe_labels.size())
    throw std::invalid_argument("probe_regression: probe rep/label count mismatch");
  if (static_cast<std::size_t>(test_reps.rows()) != test_labels.size())
    throw std::invalid_argument("probe_regression: test rep/label count mismatch");

  Tensor<double> y({probe_reps.rows(), 1});
  for (std::int64_t i = 0; i < y.rows(); ++i) y.at(i, 0) = probe_labels[static_cast<std::size_t>(i)];

  ProbeResult res;
  res.probe = fit_with_fallback(probe_reps, y, reg, lambda, &res.ridge_fallback);
  res.regularizer = res.probe.regularizer;
  res.lambda = res.probe.lambda;
  res.rank_deficient = res.probe.rank_deficient;
  res.metric = "mape_percent";
  res.probe_count = probe_labels.size();
  res.test_count = test_labels.size();

  Tensor<double> pred = res.probe.predict(test_reps);
  std::vector<double> p(test_labels.size()), t(test_labels.size());
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    p[i] = pred.at(static_cast<std::int64_t>(i), 0);
    t[i] = test_labels[i];
  }
  res.value = mape(p, t);
  return res;
}

ProbeResult probe_classification(const Tensor<double>& probe_reps,
                                 const std::vector<std::int32_t>& probe_labels,
                                 const Tensor<double>& test_reps,
                                 const std::vector<std::int32_t>& test_labels, int num_classes,
                                 ProbeRegularizer reg, double lambda) {
  if (static_cast<std::size_t>(probe_reps.rows()) != probe_labels.size())
    throw std::invalid_argument("probe_classification: probe rep/label count mismatch");
  if (static_cast<std::size_t>(test_reps.rows()) != test_labels.size())
    throw std::invalid_argument("probe_classification: test rep/label count mismatch");
  if (num_classes < 2) throw std::invalid_argument("probe_classification: need >= 2 classes");

  Tensor<double> onehot({probe_reps.rows(), num_classes});
  for (std::int64_t i = 0; i < onehot.rows(); ++i) {
    const std::int32_t y = probe_labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("probe_classification: label " + std::to_string(y) + " out of range");
    onehot.at(i, y) = 1.0;
  }

  ProbeResult res;
  res.probe = fit_with_fallback(probe_reps, onehot, reg, lambda, &res.ridge_fallback);
  res.regularizer = res.probe.regularizer;
  res.lambda = res.probe.lambda;
  res.rank_deficient = res.probe.rank_deficient;
  res.metric = "accuracy_percent";
  res.probe_count = probe_labels.size();
  res.test_count = test_labels.size();
  res.value = accuracy(argmax_rows(res.probe.predict(test_reps)), test_labels);
  return res;
}

void save_representations(const std::string& path, const Tensor<float>& reps,
                          const std::string& tap_point, const std::string& model_hash) {
  if (reps.ndim() != 2) throw std::invalid_argument("save_representations: need a 2-d matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_representations: cannot open '" + path + "'");
  out.write(reinterpret_cast<const char*>(reps.data.data()),
            static_cast<std::streamsize>(reps.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("save_representations: write to '" + path + "' failed");

  nlohmann::json side = {{"format", "alignlab-representations"},
                         {"version", 1},
                         {"rows", reps.rows()},
                         {"dim", reps.cols()},
                         {"dtype", "float32-le"},
                         {"tap_point", tap_point},
                         {"model_hash", model_hash}};
  std::ofstream js(path + ".json");
  js << side.dump(2) << '\n';
  if (!js) throw std::runtime_error("save_representations: cannot write sidecar for '" + path + "'");
}

Tensor<float> load_representations(const std::string& path, std::string* tap_point,
                                   std::string* model_hash) {
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("load_representations: missing sidecar '" + path + ".json'");
  nlohmann::json side = nlohmann::json::parse(js);
  if (side.value("format", "") != "alignlab-representations")
    throw std::runtime_error("load_representations: '" + path + "' is not a representation dump");
  const std::int64_t rows = side.at("rows").get<std::int64_t>();
  const std::int64_t dim = side.at("dim").get<std::int64_t>();
  if (tap_point) *tap_point = side.value("tap_point", "");
  if (model_hash) *model_hash = side.value("model_hash", "");

  Tensor<float> reps({rows, dim});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_representations: cannot open '" + path + "'");
  in.read(reinterpret_cast<char*>(reps.data.data()),
          static_cast<std::streamsize>(reps.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(reps.data.size() * sizeof(float)))
    throw std::runtime_error("load_representations: '" + path + "' is shorter than the sidecar claims");
  return reps;
}

}  // namespace alignlab
