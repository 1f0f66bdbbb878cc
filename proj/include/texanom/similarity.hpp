#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "texanom/grid.hpp"
#include "texanom/pyramid.hpp"

namespace texanom::similarity {

struct CwssimConfig {
  int window = 7;
  double k = 0.01;
  int stride = 1;

  void validate() const;
};

// Window scores of one subband pair. Window (i, j) covers coefficient rows
// [row_starts[i], row_starts[i] + window_rows) and the analogous column range.
struct SimilarityMap {
  RealGrid scores;
  std::vector<int> row_starts;
  std::vector<int> col_starts;
  int window_rows = 0;
  int window_cols = 0;
  int subband_rows = 0;
  int subband_cols = 0;

  double mean() const;
};

// (2|<wx,wy>| + K) / (|wx|^2 + |wy|^2 + K) over flattened windows.
double cwssim_window(std::span<const cplx> wx, std::span<const cplx> wy, double k);

// Stride-spaced windows, i.e. floor((n - R) / stride) + 1 positions per axis.
SimilarityMap cwssim_subband_map(const ComplexGrid& xs, const ComplexGrid& ys, const CwssimConfig& cfg);

// Scores on an explicit window grid; windows larger than the subband are not allowed.
SimilarityMap cwssim_window_scores(const ComplexGrid& xs, const ComplexGrid& ys, std::vector<int> row_starts,
                                   std::vector<int> col_starts, int window_rows, int window_cols, double k);

// 1 - mean over subbands of the mean window score.
double cwssim_loss(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                   const CwssimConfig& cfg);
double cwssim_loss(const pyramid::SubbandDecomposition& xd, const pyramid::SubbandDecomposition& yd,
                   const CwssimConfig& cfg);

struct LossAndGrad {
  double loss = 0.0;
  RealGrid grad;  // d loss / d y
};

LossAndGrad cwssim_loss_and_grad(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                                 const CwssimConfig& cfg);
RealGrid cwssim_loss_grad(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                          const CwssimConfig& cfg);

double mse_loss(const RealGrid& x, const RealGrid& y);
RealGrid mse_grad(const RealGrid& x, const RealGrid& y);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

// Mean local SSIM over all valid Gaussian-window positions.
double ssim_index(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg = {});
double ssim_loss(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg = {});
LossAndGrad ssim_loss_and_grad(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg = {});
RealGrid ssim_grad(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg = {});

enum class LossKind { cwssim, ssim, mse };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

// Loss bound to its configuration; one instance per patch size.
class Loss {
 public:
  Loss(LossKind kind, int patch_size, const pyramid::DecomposerConfig& pyramid_cfg, const CwssimConfig& cwssim_cfg,
       const SsimConfig& ssim_cfg = {});

  LossKind kind() const { return kind_; }
  double value(const RealGrid& x, const RealGrid& y) const;
  LossAndGrad value_and_grad(const RealGrid& x, const RealGrid& y) const;

 private:
  LossKind kind_;
  CwssimConfig cwssim_;
  SsimConfig ssim_;
  std::unique_ptr<pyramid::Decomposer> decomposer_;
};

}  // namespace texanom::similarity
