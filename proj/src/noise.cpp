#include <alignlab/noise.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace alignlab {

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::AdditiveGaussian: return "additive_gaussian";
    case NoiseKind::AdditiveGammaShifted: return "additive_gamma_shifted";
    case NoiseKind::AdditiveStudentTShifted: return "additive_student_t_shifted";
    case NoiseKind::InstanceDependentGraph: return "instance_dependent_graph";
    case NoiseKind::UniformClass: return "uniform_class";
    case NoiseKind::FlippedClass: return "flipped_class";
    case NoiseKind::InstanceDependentVision: return "instance_dependent_vision";
  }
  throw std::logic_error("noise_kind_name: bad enum");
}

NoiseKind parse_noise_kind(const std::string& name) {
  for (NoiseKind k : {NoiseKind::None, NoiseKind::AdditiveGaussian, NoiseKind::AdditiveGammaShifted,
                      NoiseKind::AdditiveStudentTShifted, NoiseKind::InstanceDependentGraph,
                      NoiseKind::UniformClass, NoiseKind::FlippedClass,
                      NoiseKind::InstanceDependentVision})
    if (noise_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

bool NoiseSpec::is_regression_noise() const {
  switch (kind) {
    case NoiseKind::None:
    case NoiseKind::AdditiveGaussian:
    case NoiseKind::AdditiveGammaShifted:
    case NoiseKind::AdditiveStudentTShifted:
    case NoiseKind::InstanceDependentGraph: return true;
    default: return false;
  }
}

bool NoiseSpec::is_classification_noise() const {
  switch (kind) {
    case NoiseKind::None:
    case NoiseKind::UniformClass:
    case NoiseKind::FlippedClass:
    case NoiseKind::InstanceDependentVision: return true;
    default: return false;
  }
}

void NoiseSpec::validate() const {
  if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0))
    throw std::invalid_argument("noise_ratio must lie in [0,1], have " + std::to_string(noise_ratio));
  switch (kind) {
    case NoiseKind::AdditiveGaussian:
      if (!(stddev > 0.0)) throw std::invalid_argument("gaussian noise needs stddev > 0");
      break;
    case NoiseKind::AdditiveGammaShifted:
      if (!(shape > 0.0) || !(rate > 0.0))
        throw std::invalid_argument("gamma noise needs shape > 0 and rate > 0");
      break;
    case NoiseKind::AdditiveStudentTShifted:
      if (!(dof > 0.0)) throw std::invalid_argument("student-t noise needs dof > 0");
      break;
    case NoiseKind::UniformClass:
      if (num_classes < 2) throw std::invalid_argument("uniform class noise needs >= 2 classes");
      break;
    case NoiseKind::FlippedClass: {
      const int c = static_cast<int>(permutation.size());
      if (c < 2) throw std::invalid_argument("flipped class noise needs a permutation of >= 2 classes");
      std::vector<char> seen(c, 0);
      for (int v : permutation) {
        if (v < 0 || v >= c || seen[v]) throw std::invalid_argument("flipped class permutation is not a bijection");
        seen[v] = 1;
      }
      break;
    }
    default: break;
  }
}

NoiseSpec no_noise() { return {}; }

NoiseSpec gaussian_noise(double mean, double stddev, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::AdditiveGaussian;
  s.mean = mean;
  s.stddev = stddev;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec gamma_noise(double shape, double rate, double shift, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::AdditiveGammaShifted;
  s.shape = shape;
  s.rate = rate;
  s.shift = shift;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec student_t_noise(double dof, double shift, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::AdditiveStudentTShifted;
  s.dof = dof;
  s.shift = shift;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec instance_graph_noise(TargetKind noise_target, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::InstanceDependentGraph;
  s.noise_target = noise_target;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec uniform_class_noise(int num_classes, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::UniformClass;
  s.num_classes = num_classes;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec flip_next_class_noise(int num_classes, double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::FlippedClass;
  s.num_classes = num_classes;
  s.permutation.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) s.permutation[c] = (c + 1) % num_classes;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

NoiseSpec instance_vision_noise(double ratio) {
  NoiseSpec s;
  s.kind = NoiseKind::InstanceDependentVision;
  s.noise_ratio = ratio;
  s.validate();
  return s;
}

nlohmann::json noise_spec_to_json(const NoiseSpec& s) {
  nlohmann::json j = {{"kind", noise_kind_name(s.kind)}, {"noise_ratio", s.noise_ratio}};
  switch (s.kind) {
    case NoiseKind::AdditiveGaussian:
      j["mean"] = s.mean;
      j["stddev"] = s.stddev;
      break;
    case NoiseKind::AdditiveGammaShifted:
      j["shape"] = s.shape;
      j["rate"] = s.rate;
      j["shift"] = s.shift;
      break;
    case NoiseKind::AdditiveStudentTShifted:
      j["dof"] = s.dof;
      j["shift"] = s.shift;
      break;
    case NoiseKind::InstanceDependentGraph:
      j["noise_target"] = target_kind_name(s.noise_target);
      break;
    case NoiseKind::UniformClass:
      j["num_classes"] = s.num_classes;
      break;
    case NoiseKind::FlippedClass:
      j["permutation"] = s.permutation;
      break;
    default: break;
  }
  return j;
}

NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
  NoiseSpec s;
  s.kind = parse_noise_kind(j.at("kind").get<std::string>());
  s.noise_ratio = j.value("noise_ratio", 0.0);
  s.mean = j.value("mean", s.mean);
  s.stddev = j.value("stddev", s.stddev);
  s.shape = j.value("shape", s.shape);
  s.rate = j.value("rate", s.rate);
  s.shift = j.value("shift", s.shift);
  s.dof = j.value("dof", s.dof);
  if (j.contains("noise_target")) s.noise_target = parse_target_kind(j["noise_target"].get<std::string>());
  s.num_classes = j.value("num_classes", s.num_classes);
  s.permutation = j.value("permutation", s.permutation);
  if (s.kind == NoiseKind::FlippedClass && !s.permutation.empty())
    s.num_classes = static_cast<int>(s.permutation.size());
  s.validate();
  return s;
}

std::string noise_spec_label(const NoiseSpec& s) {
  std::ostringstream out;
  switch (s.kind) {
    case NoiseKind::None: out << "clean"; break;
    case NoiseKind::AdditiveGaussian: out << "gauss(" << s.mean << "," << s.stddev << ")"; break;
    case NoiseKind::AdditiveGammaShifted:
      out << "gamma(" << s.shape << "," << s.rate << ")" << (s.shift < 0 ? "" : "+") << s.shift;
      break;
    case NoiseKind::AdditiveStudentTShifted:
      out << "t(" << s.dof << ")" << (s.shift < 0 ? "" : "+") << s.shift;
      break;
    case NoiseKind::InstanceDependentGraph:
      out << "inst(" << target_kind_name(s.noise_target) << ")";
      break;
    case NoiseKind::UniformClass: out << "uniform_class(" << s.num_classes << ")"; break;
    case NoiseKind::FlippedClass: out << "flip(" << s.permutation.size() << ")"; break;
    case NoiseKind::InstanceDependentVision: out << "inst(attribute)"; break;
  }
  if (s.kind != NoiseKind::None) out << "@" << s.noise_ratio;
  return out.str();
}

std::size_t corruption_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

double sample_noise_value(const NoiseSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case NoiseKind::AdditiveGaussian:
      return std::normal_distribution<double>(spec.mean, spec.stddev)(rng);
    case NoiseKind::AdditiveGammaShifted:
      // std::gamma_distribution takes (shape, scale); the spec's second
      // parameter is a rate, so scale = 1/rate.
      return std::gamma_distribution<double>(spec.shape, 1.0 / spec.rate)(rng) + spec.shift;
    case NoiseKind::AdditiveStudentTShifted:
      return std::student_t_distribution<double>(spec.dof)(rng) + spec.shift;
    default:
      throw std::invalid_argument("sample_noise_value: " + noise_kind_name(spec.kind) +
                                  " is not an additive distribution");
  }
}

std::size_t NoisyLabels::corrupted_count() const {
  return static_cast<std::size_t>(std::count(corrupted.begin(), corrupted.end(), char(1)));
}

std::size_t NoisyClassLabels::corrupted_count() const {
  return static_cast<std::size_t>(std::count(corrupted.begin(), corrupted.end(), char(1)));
}

namespace {

// Uniform k-subset of [0, n): partial Fisher-Yates, then sorted so downstream
// corruption draws happen in index order.
std::vector<std::size_t> draw_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

NoisyLabels apply_noise(const GraphDataset& ds, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (!spec.is_regression_noise())
    throw std::invalid_argument("apply_noise: " + noise_kind_name(spec.kind) +
                                " does not apply to regression labels");
  NoisyLabels out;
  out.clean = ds.labels;
  out.working = ds.labels;
  out.corrupted.assign(ds.labels.size(), 0);
  out.spec = spec;
  out.seed = seed;
  if (spec.kind == NoiseKind::None) return out;

  Rng rng = make_rng({stream::kNoise, seed});
  const std::size_t k = corruption_count(spec.noise_ratio, ds.labels.size());
  for (std::size_t i : draw_subset(ds.labels.size(), k, rng)) {
    out.corrupted[i] = 1;
    if (spec.kind == NoiseKind::InstanceDependentGraph)
      out.working[i] = target_label(ds.graphs[i], spec.noise_target);
    else
      out.working[i] = static_cast<float>(out.clean[i] + sample_noise_value(spec, rng));
  }
  return out;
}

NoisyClassLabels apply_class_noise(const std::vector<std::int32_t>& labels, const NoiseSpec& spec,
                                   std::uint64_t seed,
                                   const std::vector<std::int32_t>* attribute_labels) {
  spec.validate();
  if (!spec.is_classification_noise())
    throw std::invalid_argument("apply_class_noise: " + noise_kind_name(spec.kind) +
                                " does not apply to class labels");
  if (spec.kind == NoiseKind::InstanceDependentVision) {
    if (!attribute_labels)
      throw std::invalid_argument("apply_class_noise: instance-dependent vision noise needs attribute labels");
    if (attribute_labels->size() != labels.size())
      throw std::invalid_argument("apply_class_noise: attribute label count mismatch");
  }
  NoisyClassLabels out;
  out.clean = labels;
  out.working = labels;
  out.corrupted.assign(labels.size(), 0);
  out.spec = spec;
  out.seed = seed;
  if (spec.kind == NoiseKind::None) return out;

  Rng rng = make_rng({stream::kNoise, seed});
  const std::size_t k = corruption_count(spec.noise_ratio, labels.size());
  for (std::size_t i : draw_subset(labels.size(), k, rng)) {
    out.corrupted[i] = 1;
    switch (spec.kind) {
      case NoiseKind::UniformClass:
        out.working[i] = std::uniform_int_distribution<std::int32_t>(0, spec.num_classes - 1)(rng);
        break;
      case NoiseKind::FlippedClass: {
        const std::int32_t y = out.clean[i];
        if (y < 0 || y >= static_cast<std::int32_t>(spec.permutation.size()))
          throw std::invalid_argument("apply_class_noise: label " + std::to_string(y) +
                                      " outside the permutation's class range");
        out.working[i] = spec.permutation[static_cast<std::size_t>(y)];
        break;
      }
      case NoiseKind::InstanceDependentVision:
        out.working[i] = (*attribute_labels)[i];
        break;
      default: break;
    }
  }
  return out;
}

}  // namespace alignlab
