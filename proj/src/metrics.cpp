#include "texanom/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace texanom::metrics {

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_curve: scores and labels differ in length");
  RocCurve curve;
  for (auto l : labels) (l ? curve.positives : curve.negatives)++;
  if (curve.positives == 0 || curve.negatives == 0)
    throw EvaluationError("roc_curve needs at least one positive and one negative pixel");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double P = static_cast<double>(curve.positives);
  const double N = static_cast<double>(curve.negatives);
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double partial_auc_normalized(const RocCurve& curve, double fpr_max) {
  if (!(fpr_max > 0.0 && fpr_max <= 1.0)) throw EvaluationError("fpr_max must be in (0, 1]");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    auto b = curve.points[i];
    if (a.fpr >= fpr_max) break;
    if (b.fpr > fpr_max) {
      const double t = (fpr_max - a.fpr) / (b.fpr - a.fpr);
      b = {fpr_max, a.tpr + t * (b.tpr - a.tpr)};
    }
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area / fpr_max;
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

Components connected_components(const AnomalyMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
  const int rows = mask.rows(), cols = mask.cols();
  Grid<int> prov(rows, cols, 0);
  std::vector<int> parent{0};
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      // Already-visited neighbours: W, NW, N, NE.
      int best = 0;
      auto link = [&](int rr, int cc) {
        if (rr < 0 || cc < 0 || cc >= cols) return;
        const int l = prov(rr, cc);
        if (!l) return;
        if (!best) {
          best = l;
        } else {
          const int a = find_root(parent, best), b = find_root(parent, l);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      };
      link(r, c - 1);
      link(r - 1, c);
      if (connectivity == 8) {
        link(r - 1, c - 1);
        link(r - 1, c + 1);
      }
      if (!best) {
        best = static_cast<int>(parent.size());
        parent.push_back(best);
      }
      prov(r, c) = best;
    }

  Components out;
  out.labels = Grid<int>(rows, cols, 0);
  std::vector<int> final_id(parent.size(), 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!prov(r, c)) continue;
      const int root = find_root(parent, prov(r, c));
      if (!final_id[root]) {
        out.sizes.push_back(0);
        final_id[root] = static_cast<int>(out.sizes.size());
      }
      out.labels(r, c) = final_id[root];
      ++out.sizes[final_id[root] - 1];
    }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Coverage defect_coverage(const AnomalyMask& gt, const AnomalyMask& pred, int connectivity) {
  if (!gt.same_shape(pred)) throw ContractError("defect_coverage: mask shapes differ");
  const Components comp = connected_components(gt, connectivity);
  if (comp.count() == 0) throw EvaluationError("defect_coverage: ground truth has no defects");
  std::vector<std::size_t> hit(comp.count(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int l = comp.labels[i];
    if (l && pred[i]) ++hit[l - 1];
  }
  Coverage cov;
  for (std::size_t k = 0; k < comp.count(); ++k)
    cov.per_defect.push_back(static_cast<double>(hit[k]) / static_cast<double>(comp.sizes[k]));
  cov.median = median(cov.per_defect);
  return cov;
}

void Evaluator::add(const AnomalyMap& map, const AnomalyMask& gt, const AnomalyMask& pred) {
  if (!map.same_shape(gt) || !gt.same_shape(pred)) throw ContractError("Evaluator::add: shape mismatch");
  scores.insert(scores.end(), map.values().begin(), map.values().end());
  labels.insert(labels.end(), gt.values().begin(), gt.values().end());
  const bool has_defect = std::any_of(gt.values().begin(), gt.values().end(), [](auto v) { return v != 0; });
  if (has_defect) {
    const auto cov = defect_coverage(gt, pred, connectivity);
    coverages.insert(coverages.end(), cov.per_defect.begin(), cov.per_defect.end());
  }
  ++images;
}

EvalReport Evaluator::report(double gamma, const std::string& config_hash) const {
  const RocCurve curve = roc_curve(scores, labels);
  EvalReport r;
  r.auc = auc(curve);
  r.normalized_auc_03 = partial_auc_normalized(curve, 0.3);
  r.coverages = coverages;
  r.median_coverage = median(coverages);
  r.gamma = gamma;
  r.config_hash = config_hash;
  r.positive_pixels = curve.positives;
  r.negative_pixels = curve.negatives;
  r.images = images;
  r.connectivity = connectivity;
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["auc"] = auc;
  j["normalized_auc_03"] = normalized_auc_03;
  j["coverages"] = coverages;
  j["median_coverage"] = std::isfinite(median_coverage) ? nlohmann::json(median_coverage) : nlohmann::json();
  j["gamma"] = gamma;
  j["config_hash"] = config_hash;
  j["pixels"] = {{"positive", positive_pixels}, {"negative", negative_pixels}};
  j["images"] = images;
  j["coverage_definition"] =
      "per ground-truth " + std::to_string(connectivity) +
      "-connected component C: |C intersect predicted mask| / |C|; median pooled over all defects of all test images";
  return j.dump(2);
}

}  // namespace texanom::metrics
