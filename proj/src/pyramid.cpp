#include "texanom/pyramid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

namespace texanom::pyramid {

int subband_count(int orientations, int scales) {
  if (scales < 2) throw DomainError("subband_count: scales must be >= 2 (got " + std::to_string(scales) + ")");
  if (orientations < 1)
    throw DomainError("subband_count: orientations must be >= 1 (got " + std::to_string(orientations) + ")");
  return orientations * (scales - 2) + 2;
}

ComplexGrid gabor_kernel(double angle) {
  constexpr int half = kKernelSize / 2;
  constexpr double omega = std::numbers::pi / 2.0;
  // One-octave bandwidth: sigma = sqrt(2 ln 2) * (2^b + 1) / ((2^b - 1) * omega), b = 1.
  const double sigma = std::sqrt(2.0 * std::numbers::ln2) * 3.0 / omega;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  ComplexGrid carrier(kKernelSize, kKernelSize);
  RealGrid envelope(kKernelSize, kKernelSize);
  cplx carrier_mean = 0.0;
  double envelope_sum = 0.0;
  for (int u = -half; u <= half; ++u) {
    for (int v = -half; v <= half; ++v) {
      const double g = std::exp(-(u * u + v * v) / (2.0 * sigma * sigma));
      const double phase = omega * (v * ca - u * sa);
      envelope(u + half, v + half) = g;
      carrier(u + half, v + half) = std::polar(1.0, phase);
      carrier_mean += g * carrier(u + half, v + half);
      envelope_sum += g;
    }
  }
  carrier_mean /= envelope_sum;

  ComplexGrid k(kKernelSize, kKernelSize);
  double energy = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = envelope[i] * (carrier[i] - carrier_mean);
    energy += std::norm(k[i]);
  }
  const double scale = 1.0 / std::sqrt(energy);
  for (auto& z : k.values()) z *= scale;
  return k;
}

// FFTW plans are created under a global lock; execution on caller-owned buffers is reentrant.
class FftPlan {
 public:
  FftPlan(int rows, int cols) : rows_(rows), cols_(cols) {
    std::lock_guard lock(planner_mutex());
    auto* buf = fftw_alloc_complex(static_cast<std::size_t>(rows) * cols);
    forward_ = fftw_plan_dft_2d(rows, cols, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(rows, cols, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_free(buf);
  }
  ~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void run(fftw_complex* buf, bool forward) const { fftw_execute_dft(forward ? forward_ : backward_, buf, buf); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  int rows_;
  int cols_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

namespace {

struct FftBuffer {
  explicit FftBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)), size(n) {}
  ~FftBuffer() { fftw_free(ptr); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;
  fftw_complex* ptr;
  std::size_t size;
};

}  // namespace

RealGrid average_pool2(const RealGrid& x) {
  if (x.rows() % 2 || x.cols() % 2) throw ContractError("average_pool2 needs even dimensions");
  RealGrid out(x.rows() / 2, x.cols() / 2);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c)
      out(r, c) = 0.25 * (x(2 * r, 2 * c) + x(2 * r, 2 * c + 1) + x(2 * r + 1, 2 * c) + x(2 * r + 1, 2 * c + 1));
  return out;
}

RealGrid average_pool2_adjoint(const RealGrid& g, int rows, int cols) {
  if (rows != 2 * g.rows() || cols != 2 * g.cols()) throw ContractError("average_pool2_adjoint shape mismatch");
  RealGrid out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = 0.25 * g(r / 2, c / 2);
  return out;
}

namespace {

std::vector<int> reflected_offsets(int n, int half) {
  // idx[i * (2*half+1) + t] = reflect(i + t - half)
  const int taps = 2 * half + 1;
  std::vector<int> idx(static_cast<std::size_t>(n) * taps);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < taps; ++t) idx[static_cast<std::size_t>(i) * taps + t] = reflect_index(i + t - half, n);
  return idx;
}

}  // namespace

ComplexGrid correlate_reflect(const RealGrid& x, const ComplexGrid& kernel) {
  const int taps = kernel.rows();
  const int half = taps / 2;
  if (kernel.cols() != taps || taps % 2 == 0) throw ContractError("kernel must be square with odd size");
  const auto ri = reflected_offsets(x.rows(), half);
  const auto ci = reflected_offsets(x.cols(), half);
  ComplexGrid y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const int* rows = &ri[static_cast<std::size_t>(i) * taps];
    for (int j = 0; j < x.cols(); ++j) {
      const int* cols = &ci[static_cast<std::size_t>(j) * taps];
      double re = 0.0;
      double im = 0.0;
      for (int u = 0; u < taps; ++u) {
        const double* xr = &x(rows[u], 0);
        const cplx* kr = &kernel(u, 0);
        for (int v = 0; v < taps; ++v) {
          const double val = xr[cols[v]];
          re += kr[v].real() * val;
          im += kr[v].imag() * val;
        }
      }
      y(i, j) = {re, im};
    }
  }
  return y;
}

RealGrid correlate_reflect_adjoint(const ComplexGrid& g, const ComplexGrid& kernel) {
  const int taps = kernel.rows();
  const int half = taps / 2;
  const auto ri = reflected_offsets(g.rows(), half);
  const auto ci = reflected_offsets(g.cols(), half);
  RealGrid out(g.rows(), g.cols());
  for (int i = 0; i < g.rows(); ++i) {
    const int* rows = &ri[static_cast<std::size_t>(i) * taps];
    for (int j = 0; j < g.cols(); ++j) {
      const int* cols = &ci[static_cast<std::size_t>(j) * taps];
      const double gr = g(i, j).real();
      const double gi = g(i, j).imag();
      for (int u = 0; u < taps; ++u) {
        double* orow = &out(rows[u], 0);
        const cplx* kr = &kernel(u, 0);
        // Re(conj(g) * k)
        for (int v = 0; v < taps; ++v) orow[cols[v]] += gr * kr[v].real() + gi * kr[v].imag();
      }
    }
  }
  return out;
}

Decomposer::Decomposer(const DecomposerConfig& config) : config_(config) {
  pyramid::subband_count(config.orientations, config.scales);
  const int div = 1 << (config.scales - 1);
  if (config.rows < 1 || config.cols < 1 || config.rows % div || config.cols % div)
    throw ConfigError("decomposer input " + std::to_string(config.rows) + "x" + std::to_string(config.cols) +
                      " is not divisible by 2^(S-1) = " + std::to_string(div));
  for (int k = 0; k < config.orientations; ++k) {
    angles_.push_back(k * std::numbers::pi / config.orientations);
    kernels_.push_back(gabor_kernel(angles_.back()));
  }
  fft_ = std::make_unique<FftPlan>(config.rows, config.cols);
}

Decomposer::~Decomposer() = default;
Decomposer::Decomposer(Decomposer&&) noexcept = default;
Decomposer& Decomposer::operator=(Decomposer&&) noexcept = default;

int Decomposer::subband_count() const { return pyramid::subband_count(config_.orientations, config_.scales); }

std::vector<SubbandTag> Decomposer::tags() const {
  std::vector<SubbandTag> tags{{SubbandKind::first, 0, 0}};
  for (int s = 1; s <= config_.scales - 2; ++s)
    for (int o = 0; o < config_.orientations; ++o) tags.push_back({SubbandKind::oriented, s, o});
  tags.push_back({SubbandKind::last, config_.scales - 1, 0});
  return tags;
}

SubbandDecomposition Decomposer::zeros() const {
  SubbandDecomposition d{config_, {}};
  for (const auto& tag : tags())
    d.subbands.push_back({tag, ComplexGrid(config_.rows >> tag.scale, config_.cols >> tag.scale)});
  return d;
}

SubbandDecomposition Decomposer::decompose(const RealGrid& x) const {
  if (x.rows() != config_.rows || x.cols() != config_.cols)
    throw ContractError("decompose: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                        " does not match decomposer size " + std::to_string(config_.rows) + "x" +
                        std::to_string(config_.cols));
  SubbandDecomposition out{config_, {}};
  out.subbands.reserve(static_cast<std::size_t>(subband_count()));

  const int rows = config_.rows;
  const int cols = config_.cols;
  const double norm = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  FftBuffer buf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    buf.ptr[i][0] = x[i];
    buf.ptr[i][1] = 0.0;
  }
  fft_->run(buf.ptr, true);
  ComplexGrid spectrum(rows, cols);
  for (int k = 0; k < rows; ++k) {
    const int sk = (k + rows / 2) % rows;
    for (int l = 0; l < cols; ++l) {
      const auto& z = buf.ptr[static_cast<std::size_t>(k) * cols + l];
      spectrum(sk, (l + cols / 2) % cols) = cplx(z[0], z[1]) * norm;
    }
  }
  out.subbands.push_back({{SubbandKind::first, 0, 0}, std::move(spectrum)});

  RealGrid running = x;
  for (int s = 1; s <= config_.scales - 2; ++s) {
    running = average_pool2(running);
    for (int o = 0; o < config_.orientations; ++o)
      out.subbands.push_back({{SubbandKind::oriented, s, o}, correlate_reflect(running, kernels_[o])});
  }
  running = average_pool2(running);
  ComplexGrid residual(running.rows(), running.cols());
  for (std::size_t i = 0; i < running.size(); ++i) residual[i] = running[i];
  out.subbands.push_back({{SubbandKind::last, config_.scales - 1, 0}, std::move(residual)});
  return out;
}

RealGrid Decomposer::adjoint(const SubbandDecomposition& g) const {
  const auto expected = tags();
  if (g.subbands.size() != expected.size())
    throw ContractError("adjoint: cotangent has " + std::to_string(g.subbands.size()) + " subbands, expected " +
                        std::to_string(expected.size()));
  for (std::size_t m = 0; m < expected.size(); ++m) {
    const auto& c = g.subbands[m].coeffs;
    if (c.rows() != (config_.rows >> expected[m].scale) || c.cols() != (config_.cols >> expected[m].scale))
      throw ContractError("adjoint: subband " + std::to_string(m) + " has the wrong shape");
  }

  const int scales = config_.scales;
  const int orient = config_.orientations;
  // Gradient w.r.t. the running image after S-1 poolings, then walk back up.
  const auto& last = g.subbands.back().coeffs;
  RealGrid grad(last.rows(), last.cols());
  for (std::size_t i = 0; i < last.size(); ++i) grad[i] = last[i].real();
  for (int s = scales - 1; s >= 1; --s) {
    grad = average_pool2_adjoint(grad, config_.rows >> (s - 1), config_.cols >> (s - 1));
    if (s - 1 >= 1) {
      for (int o = 0; o < orient; ++o) {
        const auto& band = g.subbands[1 + static_cast<std::size_t>(s - 2) * orient + o].coeffs;
        const RealGrid part = correlate_reflect_adjoint(band, kernels_[o]);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += part[i];
      }
    }
  }

  const int rows = config_.rows;
  const int cols = config_.cols;
  const double norm = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  const auto& spec = g.subbands.front().coeffs;
  FftBuffer buf(static_cast<std::size_t>(rows) * cols);
  for (int k = 0; k < rows; ++k) {
    const int sk = (k + rows / 2) % rows;
    for (int l = 0; l < cols; ++l) {
      const cplx z = spec(sk, (l + cols / 2) % cols);
      auto& dst = buf.ptr[static_cast<std::size_t>(k) * cols + l];
      dst[0] = z.real();
      dst[1] = z.imag();
    }
  }
  fft_->run(buf.ptr, false);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += buf.ptr[i][0] * norm;
  return grad;
}

double inner(const SubbandDecomposition& a, const SubbandDecomposition& b) {
  if (a.size() != b.size()) throw ContractError("inner: subband count mismatch");
  double acc = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const auto& x = a[m].coeffs;
    const auto& y = b[m].coeffs;
    if (!x.same_shape(y)) throw ContractError("inner: subband shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
  }
  return acc;
}

}  // namespace texanom::pyramid
