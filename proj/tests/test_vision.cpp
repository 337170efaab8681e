#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <alignlab/analysis.hpp>
#include <alignlab/vision.hpp>

using namespace alignlab;

TEST_CASE("marker slots form a stride-2 grid, four per row, anchored at (1,1)") {
  CHECK(marker_slot_position(0) == std::pair<int, int>{1, 1});
  CHECK(marker_slot_position(1) == std::pair<int, int>{1, 3});
  CHECK(marker_slot_position(3) == std::pair<int, int>{1, 7});
  CHECK(marker_slot_position(4) == std::pair<int, int>{3, 1});
  CHECK(marker_slot_position(5) == std::pair<int, int>{3, 3});
  CHECK(marker_slot_position(9) == std::pair<int, int>{5, 3});
  CHECK_THROWS(marker_slot_position(-1));
  // Ten classes need columns up to 7: a 7-pixel image cannot hold them, an
  // 8-pixel image can.
  CHECK_THROWS_AS(generate_marker_dataset(4, 7, 10, 1), std::invalid_argument);
  CHECK_NOTHROW(generate_marker_dataset(4, 8, 10, 1));
  CHECK_THROWS_AS(generate_marker_dataset(4, 16, 0, 1), std::invalid_argument);
}

TEST_CASE("rule-based decoder recovers every marker label exactly") {
  const VisionDataset ds = generate_marker_dataset(2000, 16, 10, 77);
  int correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (decode_marker(ds, i) == ds.labels[i]) ++correct;
  CHECK(correct == 2000);
}

TEST_CASE("the marker color appears at exactly one pixel per image") {
  // Independent of the slot-based decoder: scan every pixel.
  const VisionDataset ds = generate_marker_dataset(200, 16, 10, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int hits = 0;
    std::pair<int, int> where{-1, -1};
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) {
        const float* px = ds.images.data.data() + ((i * 16 + r) * 16 + c) * 3;
        if (px[0] == kMarkerR && px[1] == kMarkerG && px[2] == kMarkerB) {
          ++hits;
          where = {r, c};
        }
      }
    REQUIRE(hits == 1);
    CHECK(where == marker_slot_position(ds.labels[i]));
  }
}

TEST_CASE("background pixels stay within [0, 0.9]; all pixels within [0, 1]") {
  const VisionDataset ds = generate_marker_dataset(300, 16, 10, 5);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto [mr, mc] = marker_slot_position(ds.labels[i]);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        for (int ch = 0; ch < 3; ++ch) {
          const float v = ds.images.data[((i * 16 + static_cast<std::size_t>(r)) * 16 +
                                          static_cast<std::size_t>(c)) * 3 + static_cast<std::size_t>(ch)];
          REQUIRE(v >= 0.0f);
          REQUIRE(v <= 1.0f);
          if (!(r == mr && c == mc)) REQUIRE(v <= kBackgroundMax);
        }
  }
}

TEST_CASE("marker classes are balanced within one example") {
  const VisionDataset ds = generate_marker_dataset(10007, 16, 10, 11);
  std::vector<int> counts(10, 0);
  for (const auto lab : ds.labels) {
    REQUIRE(lab >= 0);
    REQUIRE(lab < 10);
    ++counts[static_cast<std::size_t>(lab)];
  }
  const int lo = *std::min_element(counts.begin(), counts.end());
  const int hi = *std::max_element(counts.begin(), counts.end());
  CHECK(lo >= 1000);
  CHECK(hi <= 1001);
  CHECK(hi - lo <= 1);
}

TEST_CASE("marker and attribute labels carry almost no mutual information") {
  const VisionDataset ds = generate_marker_dataset(10000, 16, 10, 21);
  const MiEstimate mi = mutual_information(ds.labels, ds.attributes);
  CHECK(mi.bits < 0.02);
  // and both marginals actually use all ten values
  CHECK(mi.a_bins == 10);
  CHECK(mi.b_bins == 10);
}

TEST_CASE("stripe patterns are bounded, distinct, and drive a working attribute decoder") {
  for (int k = 0; k < 10; ++k) {
    const Tensor<float> pat = stripe_pattern(16, k, 10);
    for (const float v : pat.data) {
      CHECK(v >= 0.0999f);
      CHECK(v <= 0.8001f);
    }
  }
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b < 10; ++b) {
      const Tensor<float> pa = stripe_pattern(16, a, 10);
      const Tensor<float> pb = stripe_pattern(16, b, 10);
      double diff = 0.0;
      for (std::size_t i = 0; i < pa.data.size(); ++i)
        diff += std::abs(static_cast<double>(pa.data[i]) - static_cast<double>(pb.data[i]));
      CHECK(diff > 1.0);
    }

  const VisionDataset ds = generate_marker_dataset(500, 16, 10, 9);
  int correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (decode_attribute(ds, i) == ds.attributes[i]) ++correct;
  CHECK(correct >= 495);  // sigma-0.1 pixel noise vs a 255-pixel matched filter
}

TEST_CASE("generation is a pure function of (count, size, classes, seed)") {
  const VisionDataset a = generate_marker_dataset(64, 16, 10, 1234);
  const VisionDataset b = generate_marker_dataset(64, 16, 10, 1234);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.attributes == b.attributes);

  const VisionDataset c = generate_marker_dataset(64, 16, 10, 1235);
  CHECK(a.images.data != c.images.data);
}

TEST_CASE("flattened view keeps row contents and exposes [N, H*W*3]") {
  const VisionDataset ds = generate_marker_dataset(6, 16, 10, 2);
  const Tensor<float> flat = flatten_images(ds);
  REQUIRE(flat.shape == Shape{6, 768});
  CHECK(flat.data == ds.images.data);
}

TEST_CASE("dataset round-trips through the pixel blob and JSON index") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "alignlab_vision_test";
  fs::create_directories(dir);
  const std::string path = (dir / "train.f32").string();

  const VisionDataset ds = generate_marker_dataset(33, 16, 10, 8, "valid");
  save_vision_dataset(ds, path);
  const VisionDataset back = load_vision_dataset(path);
  CHECK(back.images.data == ds.images.data);
  CHECK(back.images.shape == ds.images.shape);
  CHECK(back.labels == ds.labels);
  CHECK(back.attributes == ds.attributes);
  CHECK(back.split_tag == "valid");
  CHECK(back.seed == 8);

  // Truncated blob is rejected.
  fs::resize_file(path, 100);
  CHECK_THROWS_WITH_AS(static_cast<void>(load_vision_dataset(path)),
                       doctest::Contains("does not match"), std::runtime_error);
  fs::remove_all(dir);
}
