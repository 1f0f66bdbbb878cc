#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "texanom/grid.hpp"

namespace texanom::dataio {

namespace fs = std::filesystem;

// BT.601 luma.
inline double rgb_to_gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Decodes an 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PGM/PPM and
// normalizes intensities by 255. Color inputs go through rgb_to_gray.
GrayImage load_image(const fs::path& path);

// Writes values clamped to [0,1] and quantized to 8 bits. Format is chosen by extension
// (.png, .pgm).
void save_image(const GrayImage& image, const fs::path& path);
void save_mask_png(const AnomalyMask& mask, const fs::path& path);
AnomalyMask load_mask(const fs::path& path);

// Throws ContractError unless every value is within [0,1].
void check_unit_range(const RealGrid& image, const std::string& what);

struct LabeledImage {
  fs::path image;
  std::optional<fs::path> mask;
};

struct DatasetIndex {
  std::vector<fs::path> train_normal;
  std::vector<LabeledImage> validation_defective;
  std::vector<LabeledImage> test;

  // Throws ConfigError when a path is missing or validation and test overlap.
  void validate() const;
};

// MVTec layout: <root>/train/good/*, <root>/test/<defect>/*,
// <root>/ground_truth/<defect>/<stem>_mask.png. Images named in validation
// (paths relative to root) move from the test split into the validation split.
DatasetIndex index_mvtec(const fs::path& root, const std::vector<std::string>& validation = {});

struct PatchSampler {
  int patch_size = 256;
  std::size_t count = 50000;
  std::uint64_t rng_seed = 0;
};

struct PatchLocation {
  std::size_t image = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchLocation&, const PatchLocation&) = default;
};

// Uniform image choice and uniform top-left corner, drawn with replacement.
std::vector<PatchLocation> sample_locations(const std::vector<GrayImage>& images,
                                            const PatchSampler& sampler,
                                            const std::vector<std::string>& names = {});
std::vector<GrayImage> sample_patches(const std::vector<GrayImage>& images, const PatchSampler& sampler);
std::vector<GrayImage> sample_patches(const DatasetIndex& index, const PatchSampler& sampler);

// "TAM1" | u32 rows | u32 cols | rows*cols f32, all little-endian, row-major.
// Scores are stored at single precision.
void write_anomaly_map_raw(const AnomalyMap& map, const fs::path& path);
AnomalyMap read_anomaly_map(const fs::path& path);

// Writes the raw file at `path` and a min-max scaled 8-bit preview next to it
// (same stem, ".png"). Returns the preview path.
fs::path write_anomaly_map(const AnomalyMap& map, const fs::path& path);
Grid<std::uint8_t> preview_bytes(const AnomalyMap& map);

}  // namespace texanom::dataio
