#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "texanom/grid.hpp"

namespace texanom::metrics {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// One point per distinct score, thresholds descending (score >= t is positive).
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
// Trapezoidal area under the curve.
double auc(const RocCurve& curve);
// Area over FPR in [0, fpr_max], interpolating linearly at the cut, divided by fpr_max.
double partial_auc_normalized(const RocCurve& curve, double fpr_max = 0.3);

struct Components {
  Grid<int> labels;  // 0 = background, components numbered 1..count in raster order
  std::vector<std::size_t> sizes;
  std::size_t count() const { return sizes.size(); }
};

Components connected_components(const AnomalyMask& mask, int connectivity = 8);

struct Coverage {
  std::vector<double> per_defect;
  double median = 0.0;
};

// |C ∩ pred| / |C| for every ground-truth component C.
Coverage defect_coverage(const AnomalyMask& gt, const AnomalyMask& pred, int connectivity = 8);
double median(std::vector<double> values);

struct EvalReport {
  double auc = 0.0;
  double normalized_auc_03 = 0.0;
  std::vector<double> coverages;
  double median_coverage = 0.0;
  double gamma = 0.0;
  std::string config_hash;
  std::size_t positive_pixels = 0;
  std::size_t negative_pixels = 0;
  std::size_t images = 0;
  int connectivity = 8;

  std::string to_json() const;
};

// Pools pixels from all images for the ROC and defects from all masks for coverage.
struct Evaluator {
  int connectivity = 8;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<double> coverages;
  std::size_t images = 0;

  void add(const AnomalyMap& map, const AnomalyMask& gt, const AnomalyMask& pred);
  EvalReport report(double gamma, const std::string& config_hash) const;
};

}  // namespace texanom::metrics
