#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <alignlab/tensor.hpp>

namespace alignlab {

// Synthetic marker-pixel images. The label is the location of one reserved
// pure-magenta pixel on a stride-2 slot grid; an independently drawn stripe
// background (one of K angles) provides a second, competing per-image label.
struct VisionDataset {
  Tensor<float> images;  // [N, H, W, 3], values in [0,1]
  std::vector<std::int32_t> labels;      // marker slot index
  std::vector<std::int32_t> attributes;  // background pattern index
  int image_size = 16;
  int num_classes = 10;
  std::string split_tag;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
};

// Slot k sits at row 1 + 2*(k/4), column 1 + 2*(k%4): four slots per row on
// the stride-2 grid, filling the top-left region.
std::pair<int, int> marker_slot_position(int k);

// Marker color (1, 0, 1). Backgrounds are clamped to 0.9, so a full-intensity
// red+blue pixel cannot occur anywhere else and decoding is exact.
inline constexpr float kMarkerR = 1.0f, kMarkerG = 0.0f, kMarkerB = 1.0f;
inline constexpr float kBackgroundMax = 0.9f;

// Marker classes are assigned in a balanced round-robin (counts differ by at
// most 1); attribute classes are drawn independently and uniformly.
VisionDataset generate_marker_dataset(int count, int image_size, int num_classes,
                                      std::uint64_t seed, std::string split_tag = "train");

// The clean stripe motif for attribute k (no noise), used by generation and
// by the attribute decoder. Values lie in [0.1, 0.8].
Tensor<float> stripe_pattern(int image_size, int k, int num_classes);

// Exact rule-based decoder: which slot holds the marker color. Returns -1 if
// no slot does (cannot happen for generated data).
int decode_marker(const VisionDataset& ds, std::size_t index);

// Correlation decoder for the background pattern (statistical, used only for
// sanity checks; sigma-0.1 pixel noise leaves it near-perfect).
int decode_attribute(const VisionDataset& ds, std::size_t index);

// Flattened [N, H*W*3] view for the MLP.
Tensor<float> flatten_images(const VisionDataset& ds);

// Binary float32 pixel blob plus JSON index at <path>.json.
void save_vision_dataset(const VisionDataset& ds, const std::string& path);
VisionDataset load_vision_dataset(const std::string& path);

}  // namespace alignlab
