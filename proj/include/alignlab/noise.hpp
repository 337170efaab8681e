#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include <alignlab/graphs.hpp>
#include <alignlab/rng.hpp>

namespace alignlab {

// The label-corruption taxonomy. Additive kinds and InstanceDependentGraph
// apply to regression labels; the class kinds apply to classification labels.
enum class NoiseKind {
  None,
  AdditiveGaussian,          // y + N(mean, std)
  AdditiveGammaShifted,      // y + Gamma(shape, rate) + shift
  AdditiveStudentTShifted,   // y + T(dof) + shift
  InstanceDependentGraph,    // y replaced by the competing graph target g(G)
  UniformClass,              // y resampled uniformly over all classes
  FlippedClass,              // y mapped through a fixed class permutation
  InstanceDependentVision,   // y replaced by the instance's attribute label
};

std::string noise_kind_name(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double noise_ratio = 0.0;  // fraction of examples corrupted, in [0,1]

  double mean = 0.0, stddev = 1.0;                 // AdditiveGaussian
  double shape = 2.0, rate = 1.0 / 15.0, shift = 0.0;  // AdditiveGammaShifted
  double dof = 1.0;                                // AdditiveStudentTShifted (+ shift)
  TargetKind noise_target = TargetKind::MaxDegree;  // InstanceDependentGraph
  int num_classes = 10;                            // UniformClass
  std::vector<int> permutation;                    // FlippedClass

  bool is_regression_noise() const;
  bool is_classification_noise() const;
  void validate() const;  // throws std::invalid_argument on bad parameters
};

NoiseSpec no_noise();
NoiseSpec gaussian_noise(double mean, double stddev, double ratio);
NoiseSpec gamma_noise(double shape, double rate, double shift, double ratio);
NoiseSpec student_t_noise(double dof, double shift, double ratio);
NoiseSpec instance_graph_noise(TargetKind noise_target, double ratio);
NoiseSpec uniform_class_noise(int num_classes, double ratio);
// Permutation c -> (c+1) mod C, the standard next-class flip.
NoiseSpec flip_next_class_noise(int num_classes, double ratio);
NoiseSpec instance_vision_noise(double ratio);

nlohmann::json noise_spec_to_json(const NoiseSpec& spec);
NoiseSpec noise_spec_from_json(const nlohmann::json& j);
// Compact human-readable tag, used in result tables: e.g. "gauss(10,15)@0.5".
std::string noise_spec_label(const NoiseSpec& spec);

// Exactly round-half-up(ratio * n) examples get corrupted.
std::size_t corruption_count(double ratio, std::size_t n);

// One draw from the spec's additive distribution (post-shift).
double sample_noise_value(const NoiseSpec& spec, Rng& rng);

// Corrupted regression labels. `inputs` stay with the source dataset; this
// carries the label state plus the mask needed to audit the corruption.
struct NoisyLabels {
  std::vector<float> clean;
  std::vector<float> working;
  std::vector<char> corrupted;
  NoiseSpec spec;
  std::uint64_t seed = 0;

  std::size_t corrupted_count() const;
};

struct NoisyClassLabels {
  std::vector<std::int32_t> clean;
  std::vector<std::int32_t> working;
  std::vector<char> corrupted;
  NoiseSpec spec;
  std::uint64_t seed = 0;

  std::size_t corrupted_count() const;
};

// Regression corruption over a graph dataset. The corrupted subset is drawn
// uniformly without replacement; untouched entries stay bit-identical.
NoisyLabels apply_noise(const GraphDataset& ds, const NoiseSpec& spec, std::uint64_t seed);

// Classification corruption. `attribute_labels` supplies the per-instance
// replacement labels for InstanceDependentVision and must match size.
NoisyClassLabels apply_class_noise(const std::vector<std::int32_t>& labels, const NoiseSpec& spec,
                                   std::uint64_t seed,
                                   const std::vector<std::int32_t>* attribute_labels = nullptr);

}  // namespace alignlab
