#include "texanom/similarity.hpp"

#include <cmath>
#include <numeric>

namespace texanom::similarity {

void CwssimConfig::validate() const {
  if (window < 2) throw ConfigError("cwssim.window must be >= 2");
  if (!(k > 0.0)) throw ConfigError("cwssim.k must be positive");
  if (stride < 1) throw ConfigError("cwssim.stride must be >= 1");
}

double SimilarityMap::mean() const {
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.values().begin(), scores.values().end(), 0.0) / static_cast<double>(scores.size());
}

double cwssim_window(std::span<const cplx> wx, std::span<const cplx> wy, double k) {
  if (wx.size() != wy.size()) throw ContractError("cwssim_window: window sizes differ");
  cplx cross = 0.0;
  double ex = 0.0;
  double ey = 0.0;
  for (std::size_t i = 0; i < wx.size(); ++i) {
    cross += wx[i] * std::conj(wy[i]);
    ex += std::norm(wx[i]);
    ey += std::norm(wy[i]);
  }
  return (2.0 * std::abs(cross) + k) / (ex + ey + k);
}

namespace {

std::vector<int> grid_starts(int n, int window, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + window <= n; s += stride) starts.push_back(s);
  return starts;
}

// Per-window sufficient statistics: P = sum x conj(y), D = |x|^2 + |y|^2 + K.
struct WindowStats {
  ComplexGrid cross;
  RealGrid denom;
  SimilarityMap map;
};

template <typename T>
Grid<T> box_sums(const Grid<T>& v, const std::vector<int>& rs, const std::vector<int>& cs, int wr, int wc) {
  Grid<T> horiz(v.rows(), static_cast<int>(cs.size()));
  for (int r = 0; r < v.rows(); ++r) {
    const T* row = &v(r, 0);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      T acc{};
      for (int t = 0; t < wc; ++t) acc += row[cs[j] + t];
      horiz(r, static_cast<int>(j)) = acc;
    }
  }
  Grid<T> out(static_cast<int>(rs.size()), static_cast<int>(cs.size()));
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (int t = 0; t < wr; ++t)
      for (std::size_t j = 0; j < cs.size(); ++j)
        out(static_cast<int>(i), static_cast<int>(j)) += horiz(rs[i] + t, static_cast<int>(j));
  return out;
}

// Adjoint of box_sums: each window value is spread over every coefficient it covers.
template <typename T>
Grid<T> box_scatter(const Grid<T>& w, const std::vector<int>& rs, const std::vector<int>& cs, int wr, int wc,
                    int rows, int cols) {
  Grid<T> vert(rows, static_cast<int>(cs.size()));
  for (std::size_t i = 0; i < rs.size(); ++i)
    for (int t = 0; t < wr; ++t)
      for (std::size_t j = 0; j < cs.size(); ++j)
        vert(rs[i] + t, static_cast<int>(j)) += w(static_cast<int>(i), static_cast<int>(j));
  Grid<T> out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    T* row = &out(r, 0);
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const T val = vert(r, static_cast<int>(j));
      for (int t = 0; t < wc; ++t) row[cs[j] + t] += val;
    }
  }
  return out;
}

WindowStats window_stats(const ComplexGrid& xs, const ComplexGrid& ys, std::vector<int> rs, std::vector<int> cs,
                         int wr, int wc, double k) {
  if (!xs.same_shape(ys)) throw ContractError("cwssim: subband shapes differ");
  if (wr > xs.rows() || wc > xs.cols() || wr < 1 || wc < 1)
    throw DegenerateInputError("cwssim: window " + std::to_string(wr) + "x" + std::to_string(wc) +
                               " does not fit subband " + std::to_string(xs.rows()) + "x" +
                               std::to_string(xs.cols()));
  for (int s : rs)
    if (s < 0 || s + wr > xs.rows()) throw ContractError("cwssim: window row start out of range");
  for (int s : cs)
    if (s < 0 || s + wc > xs.cols()) throw ContractError("cwssim: window column start out of range");

  ComplexGrid cross_px(xs.rows(), xs.cols());
  RealGrid energy_px(xs.rows(), xs.cols());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cross_px[i] = xs[i] * std::conj(ys[i]);
    energy_px[i] = std::norm(xs[i]) + std::norm(ys[i]);
  }
  WindowStats st;
  st.cross = box_sums(cross_px, rs, cs, wr, wc);
  st.denom = box_sums(energy_px, rs, cs, wr, wc);
  st.map.scores = RealGrid(st.cross.rows(), st.cross.cols());
  for (std::size_t i = 0; i < st.cross.size(); ++i) {
    st.denom[i] += k;
    st.map.scores[i] = (2.0 * std::abs(st.cross[i]) + k) / st.denom[i];
  }
  st.map.row_starts = std::move(rs);
  st.map.col_starts = std::move(cs);
  st.map.window_rows = wr;
  st.map.window_cols = wc;
  st.map.subband_rows = xs.rows();
  st.map.subband_cols = xs.cols();
  return st;
}

WindowStats subband_stats(const ComplexGrid& xs, const ComplexGrid& ys, const CwssimConfig& cfg) {
  cfg.validate();
  if (xs.rows() < cfg.window || xs.cols() < cfg.window)
    throw DegenerateInputError("cwssim: subband " + std::to_string(xs.rows()) + "x" + std::to_string(xs.cols()) +
                               " is smaller than the " + std::to_string(cfg.window) + "x" +
                               std::to_string(cfg.window) + " window");
  return window_stats(xs, ys, grid_starts(xs.rows(), cfg.window, cfg.stride),
                      grid_starts(xs.cols(), cfg.window, cfg.stride), cfg.window, cfg.window, cfg.k);
}

}  // namespace

SimilarityMap cwssim_subband_map(const ComplexGrid& xs, const ComplexGrid& ys, const CwssimConfig& cfg) {
  return subband_stats(xs, ys, cfg).map;
}

SimilarityMap cwssim_window_scores(const ComplexGrid& xs, const ComplexGrid& ys, std::vector<int> row_starts,
                                   std::vector<int> col_starts, int window_rows, int window_cols, double k) {
  return window_stats(xs, ys, std::move(row_starts), std::move(col_starts), window_rows, window_cols, k).map;
}

double cwssim_loss(const pyramid::SubbandDecomposition& xd, const pyramid::SubbandDecomposition& yd,
                   const CwssimConfig& cfg) {
  if (xd.size() != yd.size() || xd.size() == 0) throw ContractError("cwssim_loss: decompositions differ");
  double acc = 0.0;
  for (std::size_t m = 0; m < xd.size(); ++m) acc += cwssim_subband_map(xd[m].coeffs, yd[m].coeffs, cfg).mean();
  return 1.0 - acc / static_cast<double>(xd.size());
}

double cwssim_loss(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                   const CwssimConfig& cfg) {
  require_same_shape(x, y, "cwssim_loss");
  return cwssim_loss(decomposer.decompose(x), decomposer.decompose(y), cfg);
}

LossAndGrad cwssim_loss_and_grad(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                                 const CwssimConfig& cfg) {
  require_same_shape(x, y, "cwssim_loss_and_grad");
  const auto xd = decomposer.decompose(x);
  const auto yd = decomposer.decompose(y);
  auto cot = decomposer.zeros();
  const double bands = static_cast<double>(xd.size());
  double acc = 0.0;
  for (std::size_t m = 0; m < xd.size(); ++m) {
    const auto& xs = xd[m].coeffs;
    const auto& ys = yd[m].coeffs;
    const WindowStats st = subband_stats(xs, ys, cfg);
    const double windows = static_cast<double>(st.map.scores.size());
    acc += st.map.mean();

    // d score / d y_k (as d/dRe + i d/dIm) = alpha x_k - beta y_k, with
    // alpha = 2 conj(P) / (|P| D) and beta = 2 s / D. |P| = 0 takes subgradient 0.
    ComplexGrid alpha(st.cross.rows(), st.cross.cols());
    RealGrid beta(st.cross.rows(), st.cross.cols());
    const double w = -1.0 / (bands * windows);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const double mag = std::abs(st.cross[i]);
      alpha[i] = mag > 0.0 ? w * 2.0 * std::conj(st.cross[i]) / (mag * st.denom[i]) : cplx(0.0);
      beta[i] = w * 2.0 * st.map.scores[i] / st.denom[i];
    }
    const auto& rs = st.map.row_starts;
    const auto& cs = st.map.col_starts;
    const auto a = box_scatter(alpha, rs, cs, cfg.window, cfg.window, xs.rows(), xs.cols());
    const auto b = box_scatter(beta, rs, cs, cfg.window, cfg.window, xs.rows(), xs.cols());
    auto& g = cot[m].coeffs;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = a[i] * xs[i] - b[i] * ys[i];
  }
  return {1.0 - acc / bands, decomposer.adjoint(cot)};
}

RealGrid cwssim_loss_grad(const RealGrid& x, const RealGrid& y, const pyramid::Decomposer& decomposer,
                          const CwssimConfig& cfg) {
  return cwssim_loss_and_grad(x, y, decomposer, cfg).grad;
}

double mse_loss(const RealGrid& x, const RealGrid& y) {
  require_same_shape(x, y, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (y[i] - x[i]) * (y[i] - x[i]);
  return acc / static_cast<double>(x.size());
}

RealGrid mse_grad(const RealGrid& x, const RealGrid& y) {
  require_same_shape(x, y, "mse_grad");
  RealGrid g(x.rows(), x.cols());
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * (y[i] - x[i]) / n;
  return g;
}

namespace {

std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> w(n);
  const double c = (n - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  for (auto& v : w) v /= sum;
  return w;
}

RealGrid filter_valid(const RealGrid& x, const std::vector<double>& w) {
  const int n = static_cast<int>(w.size());
  RealGrid h(x.rows(), x.cols() - n + 1);
  for (int r = 0; r < h.rows(); ++r)
    for (int c = 0; c < h.cols(); ++c) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t) acc += w[t] * x(r, c + t);
      h(r, c) = acc;
    }
  RealGrid out(x.rows() - n + 1, h.cols());
  for (int r = 0; r < out.rows(); ++r)
    for (int t = 0; t < n; ++t)
      for (int c = 0; c < out.cols(); ++c) out(r, c) += w[t] * h(r + t, c);
  return out;
}

RealGrid filter_valid_adjoint(const RealGrid& g, const std::vector<double>& w, int rows, int cols) {
  const int n = static_cast<int>(w.size());
  RealGrid h(rows, g.cols());
  for (int r = 0; r < g.rows(); ++r)
    for (int t = 0; t < n; ++t)
      for (int c = 0; c < g.cols(); ++c) h(r + t, c) += w[t] * g(r, c);
  RealGrid out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < g.cols(); ++c)
      for (int t = 0; t < n; ++t) out(r, c + t) += w[t] * h(r, c);
  return out;
}

struct SsimTerms {
  RealGrid mx, my, sxx, syy, sxy;
  RealGrid map;
};

SsimTerms ssim_terms(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg) {
  require_same_shape(x, y, "ssim");
  if (x.rows() < cfg.window || x.cols() < cfg.window)
    throw DegenerateInputError("ssim: patch " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                               " is smaller than the " + std::to_string(cfg.window) + "x" +
                               std::to_string(cfg.window) + " window");
  const auto w = gaussian_taps(cfg.window, cfg.sigma);
  RealGrid xx(x.rows(), x.cols()), yy(x.rows(), x.cols()), xy(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  SsimTerms t{filter_valid(x, w), filter_valid(y, w), filter_valid(xx, w), filter_valid(yy, w),
              filter_valid(xy, w), {}};
  t.map = RealGrid(t.mx.rows(), t.mx.cols());
  for (std::size_t i = 0; i < t.map.size(); ++i) {
    const double mx = t.mx[i], my = t.my[i];
    const double vx = t.sxx[i] - mx * mx, vy = t.syy[i] - my * my, cxy = t.sxy[i] - mx * my;
    t.map[i] = ((2 * mx * my + cfg.c1) * (2 * cxy + cfg.c2)) / ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2));
  }
  return t;
}

}  // namespace

double ssim_index(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg) {
  const auto t = ssim_terms(x, y, cfg);
  return std::accumulate(t.map.values().begin(), t.map.values().end(), 0.0) / static_cast<double>(t.map.size());
}

double ssim_loss(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg) { return 1.0 - ssim_index(x, y, cfg); }

LossAndGrad ssim_loss_and_grad(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg) {
  const auto t = ssim_terms(x, y, cfg);
  const double n = static_cast<double>(t.map.size());
  RealGrid d_my(t.map.rows(), t.map.cols()), d_syy(t.map.rows(), t.map.cols()), d_sxy(t.map.rows(), t.map.cols());
  double acc = 0.0;
  for (std::size_t i = 0; i < t.map.size(); ++i) {
    const double mx = t.mx[i], my = t.my[i];
    const double vx = t.sxx[i] - mx * mx, vy = t.syy[i] - my * my, cxy = t.sxy[i] - mx * my;
    const double a1 = 2 * mx * my + cfg.c1, a2 = 2 * cxy + cfg.c2;
    const double b1 = mx * mx + my * my + cfg.c1, b2 = vx + vy + cfg.c2;
    const double s = t.map[i];
    acc += s;
    const double ds_dmy = 2 * mx * a2 / (b1 * b2) - s * 2 * my / b1;
    const double ds_dvy = -s / b2;
    const double ds_dcxy = 2 * a1 / (b1 * b2);
    // Loss is 1 - mean(s).
    d_my[i] = -(ds_dmy - 2 * my * ds_dvy - mx * ds_dcxy) / n;
    d_syy[i] = -ds_dvy / n;
    d_sxy[i] = -ds_dcxy / n;
  }
  const auto w = gaussian_taps(cfg.window, cfg.sigma);
  const auto gm = filter_valid_adjoint(d_my, w, x.rows(), x.cols());
  const auto gyy = filter_valid_adjoint(d_syy, w, x.rows(), x.cols());
  const auto gxy = filter_valid_adjoint(d_sxy, w, x.rows(), x.cols());
  RealGrid grad(x.rows(), x.cols());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = gm[i] + 2 * y[i] * gyy[i] + x[i] * gxy[i];
  return {1.0 - acc / n, std::move(grad)};
}

RealGrid ssim_grad(const RealGrid& x, const RealGrid& y, const SsimConfig& cfg) {
  return ssim_loss_and_grad(x, y, cfg).grad;
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "cwssim" || name == "cw-ssim") return LossKind::cwssim;
  if (name == "ssim") return LossKind::ssim;
  if (name == "mse") return LossKind::mse;
  throw ConfigError("unknown loss '" + name + "' (expected cwssim, ssim or mse)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cwssim:
      return "cwssim";
    case LossKind::ssim:
      return "ssim";
    case LossKind::mse:
      return "mse";
  }
  return "?";
}

Loss::Loss(LossKind kind, int patch_size, const pyramid::DecomposerConfig& pyramid_cfg,
           const CwssimConfig& cwssim_cfg, const SsimConfig& ssim_cfg)
    : kind_(kind), cwssim_(cwssim_cfg), ssim_(ssim_cfg) {
  if (kind_ == LossKind::cwssim) {
    cwssim_.validate();
    auto cfg = pyramid_cfg;
    cfg.rows = cfg.cols = patch_size;
    decomposer_ = std::make_unique<pyramid::Decomposer>(cfg);
  }
}

double Loss::value(const RealGrid& x, const RealGrid& y) const {
  switch (kind_) {
    case LossKind::cwssim:
      return cwssim_loss(x, y, *decomposer_, cwssim_);
    case LossKind::ssim:
      return ssim_loss(x, y, ssim_);
    case LossKind::mse:
      return mse_loss(x, y);
  }
  return 0.0;
}

LossAndGrad Loss::value_and_grad(const RealGrid& x, const RealGrid& y) const {
  switch (kind_) {
    case LossKind::cwssim:
      return cwssim_loss_and_grad(x, y, *decomposer_, cwssim_);
    case LossKind::ssim:
      return ssim_loss_and_grad(x, y, ssim_);
    case LossKind::mse:
      return {mse_loss(x, y), mse_grad(x, y)};
  }
  return {};
}

}  // namespace texanom::similarity
