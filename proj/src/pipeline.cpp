#include "texanom/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "texanom/parallel.hpp"
#include "texanom/pyramid.hpp"
#include "texanom/similarity.hpp"

namespace texanom::pipeline {

PostProcess parse_post_process(const std::string& name) {
  if (name == "none") return PostProcess::none;
  if (name == "erode") return PostProcess::erode;
  if (name == "dilate") return PostProcess::dilate;
  if (name == "close") return PostProcess::close;
  throw ConfigError("unknown post_process '" + name + "' (expected none, erode, dilate or close)");
}

std::string to_string(PostProcess op) {
  switch (op) {
    case PostProcess::none:
      return "none";
    case PostProcess::erode:
      return "erode";
    case PostProcess::dilate:
      return "dilate";
    case PostProcess::close:
      return "close";
  }
  return "?";
}

void InferenceConfig::validate() const {
  if (patch_size < 1) throw ConfigError("inference.patch_size must be positive");
  if (stride < 1 || stride > patch_size) throw ConfigError("inference.stride must be in [1, patch_size]");
  if (fusion_scales.empty()) throw ConfigError("inference.fusion_scales must not be empty");
  for (int s : fusion_scales)
    if (s < 2) throw ConfigError("inference.fusion_scales entries must be >= 2");
  if (orientations < 1) throw ConfigError("inference.orientations must be >= 1");
  if (window < 2) throw ConfigError("inference.window must be >= 2");
  if (window_stride < 1) throw ConfigError("inference.window_stride must be >= 1");
  if (!(k > 0.0)) throw ConfigError("inference.k must be positive");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw ConfigError("inference.target_fpr must be in (0,1)");
  if (erode_radius < 0) throw ConfigError("inference.erode_radius must be >= 0");
}

std::vector<int> axis_starts(int length, int patch, int stride) {
  if (length < patch)
    throw DegenerateInputError("image dimension " + std::to_string(length) + " is smaller than patch size " +
                               std::to_string(patch));
  if (stride < 1) throw ConfigError("stride must be >= 1");
  std::vector<int> starts;
  for (int s = 0; s + patch <= length; s += stride) starts.push_back(s);
  if (starts.back() + patch < length) starts.push_back(length - patch);
  return starts;
}

std::vector<GridPosition> patch_grid(int rows, int cols, int patch, int stride) {
  const auto rs = axis_starts(rows, patch, stride);
  const auto cs = axis_starts(cols, patch, stride);
  std::vector<GridPosition> out;
  out.reserve(rs.size() * cs.size());
  for (int r : rs)
    for (int c : cs) out.push_back({r, c});
  return out;
}

GrayImage reconstruct_full(const GrayImage& image, const PatchReconstructor& model, int patch, int stride,
                           int threads) {
  const auto grid = patch_grid(image.rows(), image.cols(), patch, stride);
  std::vector<RealGrid> recon(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    recon[i] = model(crop(image, grid[i].row, grid[i].col, patch, patch));
    if (recon[i].rows() != patch || recon[i].cols() != patch)
      throw ContractError("reconstruct_full: model returned a patch of the wrong size");
  });
  RealGrid sum(image.rows(), image.cols());
  Grid<int> count(image.rows(), image.cols(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (int r = 0; r < patch; ++r)
      for (int c = 0; c < patch; ++c) {
        sum(grid[i].row + r, grid[i].col + c) += recon[i](r, c);
        ++count(grid[i].row + r, grid[i].col + c);
      }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= count[i];
  return sum;
}

GrayImage reconstruct_full(const GrayImage& image, const autoencoder::ModelParams& model, const InferenceConfig& cfg) {
  cfg.validate();
  if (cfg.patch_size % model.arch.size_multiple())
    throw ContractError("inference.patch_size " + std::to_string(cfg.patch_size) + " is not divisible by " +
                        std::to_string(model.arch.size_multiple()));
  return reconstruct_full(
      image, [&](const RealGrid& p) { return autoencoder::reconstruct(p, model); }, cfg.patch_size, cfg.stride,
      cfg.threads);
}

AnomalyMap anomaly_map_single_scale(const GrayImage& image, const GrayImage& reconstruction, int scales,
                                    const InferenceConfig& cfg) {
  require_same_shape(image, reconstruction, "anomaly_map");
  const pyramid::Decomposer dec({cfg.orientations, scales, image.rows(), image.cols()});
  const auto xd = dec.decompose(image);
  const auto yd = dec.decompose(reconstruction);

  RealGrid acc(image.rows(), image.cols());
  for (std::size_t m = 0; m < xd.size(); ++m) {
    const auto& xs = xd[m].coeffs;
    const auto& ys = yd[m].coeffs;
    const int wr = std::min(cfg.window, xs.rows());
    const int wc = std::min(cfg.window, xs.cols());
    const auto sim = similarity::cwssim_window_scores(xs, ys, axis_starts(xs.rows(), wr, cfg.window_stride),
                                                      axis_starts(xs.cols(), wc, cfg.window_stride), wr, wc, cfg.k);
    // Mean score of the windows covering each coefficient.
    RealGrid sum(xs.rows(), xs.cols());
    RealGrid cover(xs.rows(), xs.cols());
    for (std::size_t i = 0; i < sim.row_starts.size(); ++i)
      for (std::size_t j = 0; j < sim.col_starts.size(); ++j) {
        const double s = sim.scores(static_cast<int>(i), static_cast<int>(j));
        for (int r = sim.row_starts[i]; r < sim.row_starts[i] + wr; ++r) {
          double* srow = &sum(r, 0);
          double* crow = &cover(r, 0);
          for (int c = sim.col_starts[j]; c < sim.col_starts[j] + wc; ++c) {
            srow[c] += s;
            crow[c] += 1.0;
          }
        }
      }
    const int f = xd[m].tag.factor();
    for (int r = 0; r < image.rows(); ++r)
      for (int c = 0; c < image.cols(); ++c) acc(r, c) += sum(r / f, c / f) / cover(r / f, c / f);
  }
  const double bands = static_cast<double>(xd.size());
  for (auto& v : acc.values()) v = std::max(0.0, 1.0 - v / bands);
  return acc;
}

AnomalyMap anomaly_map(const GrayImage& image, const GrayImage& reconstruction, const InferenceConfig& cfg) {
  cfg.validate();
  require_same_shape(image, reconstruction, "anomaly_map");
  AnomalyMap out(image.rows(), image.cols());
  for (int scales : cfg.fusion_scales) {
    const int mult = 1 << (scales - 1);
    const int rows = (image.rows() + mult - 1) / mult * mult;
    const int cols = (image.cols() + mult - 1) / mult * mult;
    const auto map = anomaly_map_single_scale(reflect_pad(image, rows, cols), reflect_pad(reconstruction, rows, cols),
                                              scales, cfg);
    for (int r = 0; r < image.rows(); ++r)
      for (int c = 0; c < image.cols(); ++c) out(r, c) += map(r, c);
  }
  for (auto& v : out.values()) v /= static_cast<double>(cfg.fusion_scales.size());
  return out;
}

double calibrate_threshold(std::vector<double> scores, double target_fpr) {
  if (scores.empty()) throw CalibrationError("no normal pixels available for threshold calibration");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw CalibrationError("target FPR must be in (0,1)");
  std::sort(scores.begin(), scores.end());
  const double pos = (1.0 - target_fpr) * static_cast<double>(scores.size() - 1);
  const auto idx = static_cast<std::size_t>(std::ceil(pos - 1e-9));
  return scores[std::min(idx, scores.size() - 1)];
}

std::vector<double> normal_scores(const std::vector<std::pair<AnomalyMap, AnomalyMask>>& validation) {
  std::vector<double> pool;
  for (const auto& [map, mask] : validation) {
    if (!map.same_shape(mask)) throw ContractError("calibration: map and mask shapes differ");
    for (std::size_t i = 0; i < map.size(); ++i)
      if (!mask[i]) pool.push_back(map[i]);
  }
  return pool;
}

double calibrate_threshold(const std::vector<std::pair<AnomalyMap, AnomalyMask>>& validation, double target_fpr) {
  return calibrate_threshold(normal_scores(validation), target_fpr);
}

double empirical_fpr(const std::vector<double>& normal, double gamma, bool strict) {
  if (normal.empty()) return 0.0;
  const auto hits = std::count_if(normal.begin(), normal.end(),
                                  [&](double v) { return strict ? v > gamma : v >= gamma; });
  return static_cast<double>(hits) / static_cast<double>(normal.size());
}

AnomalyMask threshold(const AnomalyMap& map, double gamma) {
  AnomalyMask m(map.rows(), map.cols(), 0);
  for (std::size_t i = 0; i < map.size(); ++i) m[i] = map[i] >= gamma ? 1 : 0;
  return m;
}

namespace {

// prefix(r, c) = number of ones in row r at columns < c.
Grid<int> row_prefix(const AnomalyMask& mask) {
  Grid<int> p(mask.rows(), mask.cols() + 1, 0);
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) p(r, c + 1) = p(r, c) + (mask(r, c) ? 1 : 0);
  return p;
}

std::vector<int> disk_half_widths(int radius) {
  std::vector<int> hw(2 * radius + 1);
  for (int dr = -radius; dr <= radius; ++dr) {
    int w = 0;
    while ((w + 1) * (w + 1) + dr * dr <= radius * radius) ++w;
    hw[dr + radius] = w;
  }
  return hw;
}

}  // namespace

AnomalyMask erode(const AnomalyMask& mask, int radius) {
  if (radius < 0) throw ConfigError("erosion radius must be >= 0");
  if (radius == 0) return mask;
  const auto p = row_prefix(mask);
  const auto hw = disk_half_widths(radius);
  AnomalyMask out(mask.rows(), mask.cols(), 0);
  for (int r = 0; r < mask.rows(); ++r) {
    if (r - radius < 0 || r + radius >= mask.rows()) continue;
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      bool keep = true;
      for (int dr = -radius; dr <= radius && keep; ++dr) {
        const int w = hw[dr + radius];
        const int lo = c - w, hi = c + w;
        if (lo < 0 || hi >= mask.cols()) {
          keep = false;
          break;
        }
        keep = p(r + dr, hi + 1) - p(r + dr, lo) == 2 * w + 1;
      }
      out(r, c) = keep ? 1 : 0;
    }
  }
  return out;
}

AnomalyMask dilate(const AnomalyMask& mask, int radius) {
  if (radius < 0) throw ConfigError("dilation radius must be >= 0");
  if (radius == 0) return mask;
  const auto p = row_prefix(mask);
  const auto hw = disk_half_widths(radius);
  AnomalyMask out(mask.rows(), mask.cols(), 0);
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) {
      bool any = false;
      for (int dr = -radius; dr <= radius && !any; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= mask.rows()) continue;
        const int w = hw[dr + radius];
        const int lo = std::max(0, c - w), hi = std::min(mask.cols() - 1, c + w);
        any = p(rr, hi + 1) - p(rr, lo) > 0;
      }
      out(r, c) = any ? 1 : 0;
    }
  return out;
}

AnomalyMask binarize_and_erode(const AnomalyMap& map, double gamma, int radius, PostProcess op) {
  const AnomalyMask raw = threshold(map, gamma);
  switch (op) {
    case PostProcess::none:
      return raw;
    case PostProcess::erode:
      return erode(raw, radius);
    case PostProcess::dilate:
      return dilate(raw, radius);
    case PostProcess::close:
      return erode(dilate(raw, radius), radius);
  }
  return raw;
}

}  // namespace texanom::pipeline
