#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "texanom/dataio.hpp"
#include "texanom/rng.hpp"

namespace texanom::synthetic {

struct StripeTexture {
  double angle = 0.6;
  double period = 8.0;
  double amplitude = 0.35;
  double noise = 0.02;
};

inline GrayImage stripe_image(int rows, int cols, const StripeTexture& t, std::uint64_t seed, double angle_offset = 0.0) {
  Rng rng(derive_seed(seed, "texture"));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, t.noise);
  const double ph = phase(rng);
  const double a = t.angle + angle_offset;
  const double w = 2.0 * std::numbers::pi / t.period;
  GrayImage g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v = 0.5 + t.amplitude * std::sin(w * (c * std::cos(a) + r * std::sin(a)) + ph) + noise(rng);
      g(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return g;
}

enum class DefectKind { flat, rotated };

struct DefectImage {
  GrayImage image;
  AnomalyMask mask;
  DefectKind kind = DefectKind::flat;
};

// A square or disk region replaced by a flat gray level or by stripes rotated 90 degrees.
inline DefectImage defect_image(int rows, int cols, const StripeTexture& t, DefectKind kind, std::uint64_t seed) {
  DefectImage d;
  d.kind = kind;
  d.image = stripe_image(rows, cols, t, seed);
  d.mask = AnomalyMask(rows, cols, 0);
  Rng rng(derive_seed(seed, "defect"));
  std::uniform_int_distribution<int> size(14, 28);
  const int s = size(rng);
  std::uniform_int_distribution<int> r0(4, rows - s - 4), c0(4, cols - s - 4);
  const int top = r0(rng), left = c0(rng);
  const bool disk = rng() & 1;
  std::uniform_real_distribution<double> level(0.3, 0.7);
  const double flat = level(rng);
  const GrayImage rotated = stripe_image(rows, cols, t, seed + 1, std::numbers::pi / 2);
  const double cr = top + (s - 1) / 2.0, cc = left + (s - 1) / 2.0;
  for (int r = top; r < top + s; ++r)
    for (int c = left; c < left + s; ++c) {
      if (disk && (r - cr) * (r - cr) + (c - cc) * (c - cc) > s * s / 4.0) continue;
      d.mask(r, c) = 1;
      d.image(r, c) = kind == DefectKind::flat ? flat : rotated(r, c);
    }
  return d;
}

struct DatasetLayout {
  int train = 8;
  int validation = 4;
  int test_defective = 20;
  int test_good = 0;
  int rows = 128;
  int cols = 128;
};

// Writes <root>/train/good, <root>/test/{good,flat,rotated}, <root>/ground_truth/{flat,rotated}.
// Returns validation image paths relative to root. Defect kinds alternate.
inline std::vector<std::string> write_dataset(const std::filesystem::path& root, const DatasetLayout& L,
                                              const StripeTexture& t, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::remove_all(root);
  for (const char* d : {"train/good", "test/good", "test/flat", "test/rotated", "ground_truth/flat",
                        "ground_truth/rotated"})
    fs::create_directories(root / d);
  auto name = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", i);
    return std::string(buf);
  };
  for (int i = 0; i < L.train; ++i)
    dataio::save_image(stripe_image(L.rows, L.cols, t, derive_seed(seed, "train", i)), root / "train/good" / (name(i) + ".png"));
  for (int i = 0; i < L.test_good; ++i)
    dataio::save_image(stripe_image(L.rows, L.cols, t, derive_seed(seed, "good", i)), root / "test/good" / (name(i) + ".png"));
  std::vector<std::string> validation;
  int counter[2] = {0, 0};
  for (int i = 0; i < L.validation + L.test_defective; ++i) {
    const auto kind = i % 2 ? DefectKind::rotated : DefectKind::flat;
    const std::string dir = kind == DefectKind::flat ? "flat" : "rotated";
    const int k = counter[i % 2]++;
    const auto d = defect_image(L.rows, L.cols, t, kind, derive_seed(seed, "defect_image", i));
    dataio::save_image(d.image, root / "test" / dir / (name(k) + ".png"));
    dataio::save_mask_png(d.mask, root / "ground_truth" / dir / (name(k) + "_mask.png"));
    if (i < L.validation) validation.push_back("test/" + dir + "/" + name(k) + ".png");
  }
  return validation;
}

}  // namespace texanom::synthetic
