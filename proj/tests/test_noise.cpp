#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <doctest.h>

#include <alignlab/graphs.hpp>
#include <alignlab/noise.hpp>
#include <alignlab/rng.hpp>

using namespace alignlab;

namespace {

GraphDataset tiny_dataset(int count, std::uint64_t seed, TargetKind target = TargetKind::MaxDegree) {
  ErOptions opt;
  opt.count = count;
  opt.min_nodes = 5;
  opt.max_nodes = 10;
  opt.seed = seed;
  opt.target = target;
  return generate_er_dataset(opt);
}

}  // namespace

TEST_CASE("corruption count is round-half-up of ratio * n") {
  CHECK(corruption_count(0.0, 1000) == 0);
  CHECK(corruption_count(1.0, 1000) == 1000);
  CHECK(corruption_count(0.5, 101) == 51);   // 50.5 rounds up
  CHECK(corruption_count(0.25, 2) == 1);     // 0.5 rounds up
  CHECK(corruption_count(0.2, 7) == 1);      // 1.4 rounds down
  CHECK(corruption_count(0.3, 5) == 2);      // 1.5 rounds up
}

TEST_CASE("additive sampler means match their distributions over 1e6 draws") {
  const int n = 1'000'000;
  Rng rng = make_rng({stream::kNoise, 1});
  NoiseSpec gauss = gaussian_noise(0.0, 40.0, 1.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_noise_value(gauss, rng);
  CHECK(std::abs(sum / n) < 0.2);

  // shape 2 at rate 1/15 has mean 30; the -30 shift centers it at zero. This
  // pins the rate (not scale) reading of the second parameter: the scale
  // reading would put the mean near 2/15 - 30 = -29.87.
  NoiseSpec gamma = gamma_noise(2.0, 1.0 / 15.0, -30.0, 1.0);
  sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_noise_value(gamma, rng);
  CHECK(std::abs(sum / n) < 0.2);

  // dof 1 has no mean; the median sits at the shift.
  NoiseSpec t1 = student_t_noise(1.0, 10.0, 1.0);
  std::vector<double> draws(n);
  for (auto& d : draws) d = sample_noise_value(t1, rng);
  std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
  CHECK(std::abs(draws[n / 2] - 10.0) < 0.2);
}

TEST_CASE("fixed seed yields an identical noise stream") {
  NoiseSpec spec = gaussian_noise(10.0, 15.0, 1.0);
  Rng a = make_rng({stream::kNoise, 7}), b = make_rng({stream::kNoise, 7});
  for (int i = 0; i < 100; ++i) CHECK(sample_noise_value(spec, a) == sample_noise_value(spec, b));
}

TEST_CASE("ratio 0 leaves labels untouched with an empty mask") {
  GraphDataset ds = tiny_dataset(50, 3);
  NoisyLabels nl = apply_noise(ds, gaussian_noise(0.0, 40.0, 0.0), 9);
  CHECK(nl.corrupted_count() == 0);
  CHECK(nl.working == ds.labels);
  CHECK(nl.clean == ds.labels);
}

TEST_CASE("additive corruption hits exactly round(rN) entries and only those") {
  GraphDataset ds = tiny_dataset(101, 4);
  NoisyLabels nl = apply_noise(ds, gaussian_noise(10.0, 15.0, 0.5), 11);
  CHECK(nl.corrupted_count() == 51);
  for (std::size_t i = 0; i < nl.clean.size(); ++i) {
    if (nl.corrupted[i])
      CHECK(nl.working[i] != nl.clean[i]);
    else
      CHECK(nl.working[i] == nl.clean[i]);  // bit-identical where untouched
  }
}

TEST_CASE("mean additive offset matches the distribution mean at scale") {
  ErOptions opt;
  opt.count = 100000;
  opt.min_nodes = 2;
  opt.max_nodes = 3;
  opt.seed = 5;
  GraphDataset ds = generate_er_dataset(opt);
  NoisyLabels nl = apply_noise(ds, gaussian_noise(10.0, 15.0, 1.0), 13);
  double sum = 0.0;
  for (std::size_t i = 0; i < nl.clean.size(); ++i) sum += nl.working[i] - nl.clean[i];
  CHECK(std::abs(sum / nl.clean.size() - 10.0) < 0.2);
}

TEST_CASE("instance-dependent graph noise at ratio 1 replaces every label with the competing target") {
  GraphDataset ds = tiny_dataset(200, 6, TargetKind::MaxNodeFeature);
  NoisyLabels nl = apply_noise(ds, instance_graph_noise(TargetKind::MaxDegree, 1.0), 17);
  CHECK(nl.corrupted_count() == 200);
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(nl.working[i] == max_degree_label(ds.graphs[i]));
}

TEST_CASE("corrupted index set is uniform across positions (chi-square at 0.01)") {
  GraphDataset ds = tiny_dataset(50, 8);
  std::vector<int> hits(50, 0);
  const int trials = 2000;
  for (int s = 0; s < trials; ++s) {
    NoisyLabels nl = apply_noise(ds, gaussian_noise(0.0, 1.0, 0.2), 1000 + s);
    CHECK(nl.corrupted_count() == 10);
    for (int i = 0; i < 50; ++i) hits[i] += nl.corrupted[i];
  }
  const double expected = trials * 10.0 / 50.0;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
  // 99th percentile of chi-square with 49 degrees of freedom.
  CHECK(chi2 < 74.919);
}

TEST_CASE("uniform class noise at ratio 1 is uniform over classes (chi-square at 0.01)") {
  const int n = 20000, C = 10;
  std::vector<std::int32_t> labels(n, 3);  // degenerate clean labels
  NoisyClassLabels nl = apply_class_noise(labels, uniform_class_noise(C, 1.0), 21);
  std::vector<int> counts(C, 0);
  for (std::int32_t y : nl.working) {
    REQUIRE(y >= 0);
    REQUIRE(y < C);
    ++counts[y];
  }
  const double expected = double(n) / C;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 9 degrees of freedom.
  CHECK(chi2 < 21.666);
}

TEST_CASE("flipped noise at ratio 1 permutes the label histogram") {
  const int C = 5;
  std::vector<std::int32_t> labels;
  Rng rng = make_rng({stream::kNoise, 23});
  for (int i = 0; i < 5000; ++i)
    labels.push_back(std::uniform_int_distribution<std::int32_t>(0, C - 1)(rng));
  NoiseSpec spec = flip_next_class_noise(C, 1.0);
  NoisyClassLabels nl = apply_class_noise(labels, spec, 29);

  std::map<int, int> before, after;
  for (auto y : labels) ++before[y];
  for (auto y : nl.working) ++after[y];
  for (int c = 0; c < C; ++c) CHECK(after[spec.permutation[c]] == before[c]);
  for (std::size_t i = 0; i < labels.size(); ++i)
    CHECK(nl.working[i] == spec.permutation[labels[i]]);
}

TEST_CASE("instance-dependent vision noise pulls from the attribute labels") {
  std::vector<std::int32_t> labels = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::int32_t> attrs = {9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  NoisyClassLabels nl = apply_class_noise(labels, instance_vision_noise(1.0), 31, &attrs);
  CHECK(nl.working == attrs);
  CHECK_THROWS_AS(apply_class_noise(labels, instance_vision_noise(0.5), 31, nullptr),
                  std::invalid_argument);
}

TEST_CASE("label-space mismatches and bad parameters are rejected") {
  GraphDataset ds = tiny_dataset(10, 9);
  CHECK_THROWS_AS(apply_noise(ds, uniform_class_noise(10, 0.5), 1), std::invalid_argument);
  std::vector<std::int32_t> labels = {0, 1, 2};
  CHECK_THROWS_AS(apply_class_noise(labels, gaussian_noise(0, 40, 0.5), 1), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_noise(0, -1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gamma_noise(0, 1.0 / 15, -30, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_noise(0, 40, 1.5), std::invalid_argument);
  NoiseSpec bad;
  bad.kind = NoiseKind::FlippedClass;
  bad.permutation = {0, 0, 2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("noise spec json round trip") {
  for (const NoiseSpec& spec :
       {gaussian_noise(10, 15, 0.5), gamma_noise(2, 1.0 / 15, -30, 1.0), student_t_noise(1, 10, 0.25),
        instance_graph_noise(TargetKind::MaxDegree, 1.0), uniform_class_noise(10, 0.75),
        flip_next_class_noise(7, 0.3), instance_vision_noise(0.6), no_noise()}) {
    NoiseSpec back = noise_spec_from_json(noise_spec_to_json(spec));
    CHECK(back.kind == spec.kind);
    CHECK(back.noise_ratio == spec.noise_ratio);
    CHECK(back.mean == spec.mean);
    CHECK(back.stddev == spec.stddev);
    CHECK(back.shape == spec.shape);
    CHECK(back.rate == spec.rate);
    CHECK(back.shift == spec.shift);
    CHECK(back.dof == spec.dof);
    CHECK(back.noise_target == spec.noise_target);
    CHECK(back.num_classes == spec.num_classes);
    CHECK(back.permutation == spec.permutation);
    CHECK(noise_spec_label(back) == noise_spec_label(spec));
  }
  CHECK(noise_spec_label(gaussian_noise(10, 15, 0.5)) == "gauss(10,15)@0.5");
}

TEST_CASE("same seed reproduces the same corruption bitwise") {
  GraphDataset ds = tiny_dataset(500, 12);
  NoiseSpec spec = gamma_noise(2.0, 1.0 / 15.0, -30.0, 0.7);
  NoisyLabels a = apply_noise(ds, spec, 77);
  NoisyLabels b = apply_noise(ds, spec, 77);
  CHECK(a.working == b.working);
  CHECK(a.corrupted == b.corrupted);
  NoisyLabels c = apply_noise(ds, spec, 78);
  CHECK(a.working != c.working);
}
