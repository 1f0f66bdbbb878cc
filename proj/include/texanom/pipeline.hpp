#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "texanom/autoencoder.hpp"
#include "texanom/grid.hpp"

namespace texanom::pipeline {

enum class PostProcess { none, erode, dilate, close };

PostProcess parse_post_process(const std::string& name);
std::string to_string(PostProcess op);

struct InferenceConfig {
  int patch_size = 256;
  int stride = 16;
  std::vector<int> fusion_scales{7, 8, 9};
  int orientations = 6;
  int window = 7;
  int window_stride = 1;
  double k = 0.01;
  double target_fpr = 0.05;
  int erode_radius = 10;
  PostProcess post_process = PostProcess::erode;
  int threads = 1;

  void validate() const;
};

struct GridPosition {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPosition&, const GridPosition&) = default;
};

// Starts 0, stride, 2*stride, ... plus one flush with the far edge when needed.
std::vector<int> axis_starts(int length, int patch, int stride);
std::vector<GridPosition> patch_grid(int rows, int cols, int patch, int stride);

using PatchReconstructor = std::function<RealGrid(const RealGrid&)>;

// Average of every overlapping patch reconstruction covering each pixel.
GrayImage reconstruct_full(const GrayImage& image, const PatchReconstructor& model, int patch, int stride,
                           int threads = 1);
GrayImage reconstruct_full(const GrayImage& image, const autoencoder::ModelParams& model, const InferenceConfig& cfg);

// Per-pixel 1 - mean CW-SSIM over subbands, averaged across the fusion scales.
// Windows that would exceed a small subband shrink to the subband size.
AnomalyMap anomaly_map(const GrayImage& image, const GrayImage& reconstruction, const InferenceConfig& cfg);
// Single-scale map on an image whose size is already a multiple of 2^(scales-1).
AnomalyMap anomaly_map_single_scale(const GrayImage& image, const GrayImage& reconstruction, int scales,
                                    const InferenceConfig& cfg);

// (1 - target_fpr) quantile with "higher" interpolation.
double calibrate_threshold(std::vector<double> normal_scores, double target_fpr = 0.05);
// Pools every pixel with mask value 0.
double calibrate_threshold(const std::vector<std::pair<AnomalyMap, AnomalyMask>>& validation,
                           double target_fpr = 0.05);
std::vector<double> normal_scores(const std::vector<std::pair<AnomalyMap, AnomalyMask>>& validation);

// Fraction of scores >= gamma (or > gamma when strict).
double empirical_fpr(const std::vector<double>& normal, double gamma, bool strict = false);

AnomalyMask threshold(const AnomalyMap& map, double gamma);
// Disk = offsets with dr^2 + dc^2 <= radius^2. Pixels outside the frame count as 0.
AnomalyMask erode(const AnomalyMask& mask, int radius);
AnomalyMask dilate(const AnomalyMask& mask, int radius);
AnomalyMask binarize_and_erode(const AnomalyMap& map, double gamma, int radius = 10,
                               PostProcess op = PostProcess::erode);

}  // namespace texanom::pipeline
