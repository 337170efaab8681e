#include <alignlab/vision.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include <alignlab/rng.hpp>

namespace alignlab {

namespace {

constexpr int kSlotsPerRow = 4;
constexpr double kStripePeriod = 4.0;

void validate_geometry(int image_size, int num_classes) {
  if (num_classes < 1) throw std::invalid_argument("marker dataset: num_classes must be >= 1");
  if (image_size < 2) throw std::invalid_argument("marker dataset: image_size must be >= 2");
  const auto [row, col] = marker_slot_position(num_classes - 1);
  const int max_col = 1 + 2 * (std::min(num_classes - 1, kSlotsPerRow - 1));
  if (row >= image_size || max_col >= image_size) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "marker dataset: %d classes need slots up to row %d, col %d; image size %d is too small",
                  num_classes, row, max_col, image_size);
    throw std::invalid_argument(buf);
  }
}

}  // namespace

std::pair<int, int> marker_slot_position(int k) {
  if (k < 0) throw std::invalid_argument("marker slot index must be >= 0");
  return {1 + 2 * (k / kSlotsPerRow), 1 + 2 * (k % kSlotsPerRow)};
}

Tensor<float> stripe_pattern(int image_size, int k, int num_classes) {
  validate_geometry(image_size, num_classes);
  if (k < 0 || k >= num_classes) throw std::invalid_argument("stripe pattern: class out of range");
  const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_classes);
  const double cx = std::cos(theta), sy = std::sin(theta);
  Tensor<float> pat = Tensor<float>::zeros({image_size, image_size});
  for (int r = 0; r < image_size; ++r)
    for (int c = 0; c < image_size; ++c) {
      const double phase = 2.0 * std::numbers::pi * (cx * c + sy * r) / kStripePeriod;
      pat.at(r, c) = static_cast<float>(0.45 + 0.35 * std::sin(phase));
    }
  return pat;
}

VisionDataset generate_marker_dataset(int count, int image_size, int num_classes,
                                      std::uint64_t seed, std::string split_tag) {
  validate_geometry(image_size, num_classes);
  if (count < 0) throw std::invalid_argument("marker dataset: count must be >= 0");

  VisionDataset ds;
  ds.image_size = image_size;
  ds.num_classes = num_classes;
  ds.split_tag = std::move(split_tag);
  ds.seed = seed;
  ds.images = Tensor<float>::zeros({count, image_size, image_size, 3});
  ds.labels.resize(static_cast<std::size_t>(count));
  ds.attributes.resize(static_cast<std::size_t>(count));

  // Balanced marker assignment: round-robin pool, shuffled once. Class counts
  // differ by at most one regardless of count.
  for (int i = 0; i < count; ++i) ds.labels[static_cast<std::size_t>(i)] = i % num_classes;
  Rng shuffle_rng = make_rng({stream::kVision, seed, 0xA55u});
  std::shuffle(ds.labels.begin(), ds.labels.end(), shuffle_rng);

  std::vector<Tensor<float>> patterns;
  patterns.reserve(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) patterns.push_back(stripe_pattern(image_size, k, num_classes));

  const std::int64_t hw = static_cast<std::int64_t>(image_size) * image_size;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng({stream::kVision, seed, static_cast<std::uint64_t>(i)});
    std::uniform_int_distribution<int> attr_dist(0, num_classes - 1);
    const int attr = attr_dist(rng);
    ds.attributes[static_cast<std::size_t>(i)] = attr;

    std::normal_distribution<double> noise(0.0, 0.1);
    const Tensor<float>& pat = patterns[static_cast<std::size_t>(attr)];
    float* img = ds.images.data.data() + static_cast<std::size_t>(i) * hw * 3;
    for (int r = 0; r < image_size; ++r)
      for (int c = 0; c < image_size; ++c) {
        const float base = pat.at(r, c);
        for (int ch = 0; ch < 3; ++ch) {
          const double v = static_cast<double>(base) + noise(rng);
          img[(static_cast<std::int64_t>(r) * image_size + c) * 3 + ch] =
              static_cast<float>(std::clamp(v, 0.0, static_cast<double>(kBackgroundMax)));
        }
      }

    const auto [mr, mc] = marker_slot_position(ds.labels[static_cast<std::size_t>(i)]);
    float* px = img + (static_cast<std::int64_t>(mr) * image_size + mc) * 3;
    px[0] = kMarkerR;
    px[1] = kMarkerG;
    px[2] = kMarkerB;
  }
  return ds;
}

int decode_marker(const VisionDataset& ds, std::size_t index) {
  const std::int64_t hw = static_cast<std::int64_t>(ds.image_size) * ds.image_size;
  const float* img = ds.images.data.data() + static_cast<std::int64_t>(index) * hw * 3;
  for (int k = 0; k < ds.num_classes; ++k) {
    const auto [r, c] = marker_slot_position(k);
    const float* px = img + (static_cast<std::int64_t>(r) * ds.image_size + c) * 3;
    if (px[0] == kMarkerR && px[1] == kMarkerG && px[2] == kMarkerB) return k;
  }
  return -1;
}

int decode_attribute(const VisionDataset& ds, std::size_t index) {
  const std::int64_t hw = static_cast<std::int64_t>(ds.image_size) * ds.image_size;
  const float* img = ds.images.data.data() + static_cast<std::int64_t>(index) * hw * 3;
  const int marker = decode_marker(ds, index);
  const auto [mr, mc] = marker >= 0 ? marker_slot_position(marker) : std::pair<int, int>{-1, -1};

  int best = -1;
  double best_score = -1e300;
  for (int k = 0; k < ds.num_classes; ++k) {
    Tensor<float> pat = stripe_pattern(ds.image_size, k, ds.num_classes);
    double score = 0.0;
    for (int r = 0; r < ds.image_size; ++r)
      for (int c = 0; c < ds.image_size; ++c) {
        if (r == mr && c == mc) continue;
        const double p = static_cast<double>(pat.at(r, c)) - 0.45;
        const double v = static_cast<double>(img[(static_cast<std::int64_t>(r) * ds.image_size + c) * 3]) - 0.45;
        score += p * v;
      }
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

Tensor<float> flatten_images(const VisionDataset& ds) {
  Tensor<float> flat = ds.images;
  const std::int64_t n = static_cast<std::int64_t>(ds.size());
  flat.shape = {n, static_cast<std::int64_t>(ds.image_size) * ds.image_size * 3};
  return flat;
}

void save_vision_dataset(const VisionDataset& ds, const std::string& path) {
  std::ofstream blob(path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open for writing: " + path);
  blob.write(reinterpret_cast<const char*>(ds.images.data.data()),
             static_cast<std::streamsize>(ds.images.data.size() * sizeof(float)));
  if (!blob) throw std::runtime_error("failed writing pixel blob: " + path);
  blob.close();

  nlohmann::json index;
  index["format"] = "alignlab-vision-dataset";
  index["version"] = 1;
  index["count"] = ds.size();
  index["image_size"] = ds.image_size;
  index["num_classes"] = ds.num_classes;
  index["split_tag"] = ds.split_tag;
  index["seed"] = ds.seed;
  index["labels"] = ds.labels;
  index["attributes"] = ds.attributes;
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot open for writing: " + path + ".json");
  meta << index.dump(2) << "\n";
}

VisionDataset load_vision_dataset(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot open: " + path + ".json");
  nlohmann::json index = nlohmann::json::parse(meta);
  if (index.value("format", "") != "alignlab-vision-dataset")
    throw std::runtime_error("not a vision dataset index: " + path + ".json");
  if (index.value("version", 0) != 1)
    throw std::runtime_error("unsupported vision dataset version in " + path + ".json");

  VisionDataset ds;
  ds.image_size = index.at("image_size").get<int>();
  ds.num_classes = index.at("num_classes").get<int>();
  ds.split_tag = index.value("split_tag", "");
  ds.seed = index.value("seed", std::uint64_t{0});
  ds.labels = index.at("labels").get<std::vector<std::int32_t>>();
  ds.attributes = index.at("attributes").get<std::vector<std::int32_t>>();
  const std::size_t count = index.at("count").get<std::size_t>();
  if (ds.labels.size() != count || ds.attributes.size() != count)
    throw std::runtime_error("vision dataset index has inconsistent label counts: " + path + ".json");
  validate_geometry(ds.image_size, ds.num_classes);

  const std::int64_t n = static_cast<std::int64_t>(count);
  ds.images = Tensor<float>::zeros({n, ds.image_size, ds.image_size, 3});
  std::ifstream blob(path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open: " + path);
  blob.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(blob.tellg());
  if (bytes != ds.images.data.size() * sizeof(float))
    throw std::runtime_error("pixel blob size does not match index: " + path);
  blob.seekg(0);
  blob.read(reinterpret_cast<char*>(ds.images.data.data()), static_cast<std::streamsize>(bytes));
  if (!blob) throw std::runtime_error("failed reading pixel blob: " + path);
  return ds;
}

}  // namespace alignlab
