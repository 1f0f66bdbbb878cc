#include "texanom/autoencoder.hpp"

#include <Eigen/Core>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "texanom/parallel.hpp"
#include "texanom/rng.hpp"

namespace texanom::autoencoder {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using MapConstMat = Eigen::Map<const Mat>;

// Patch rows of `src` (C x H x W) laid out as (C*k*k) x (Ho*Wo).
void im2col(const double* src, int channels, int rows, int cols, int k, int s, int p, int out_rows, int out_cols,
            double* dst) {
  const std::size_t plane = static_cast<std::size_t>(out_rows) * out_cols;
  for (int c = 0; c < channels; ++c) {
    const double* img = src + static_cast<std::size_t>(c) * rows * cols;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* d = dst + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        for (int oh = 0; oh < out_rows; ++oh) {
          const int ih = oh * s - p + ki;
          double* drow = d + static_cast<std::size_t>(oh) * out_cols;
          if (ih < 0 || ih >= rows) {
            std::fill(drow, drow + out_cols, 0.0);
            continue;
          }
          const double* srow = img + static_cast<std::size_t>(ih) * cols;
          for (int ow = 0; ow < out_cols; ++ow) {
            const int iw = ow * s - p + kj;
            drow[ow] = (iw >= 0 && iw < cols) ? srow[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into a zeroed C x H x W buffer.
void col2im(const double* src, int channels, int rows, int cols, int k, int s, int p, int out_rows, int out_cols,
            double* dst) {
  const std::size_t plane = static_cast<std::size_t>(out_rows) * out_cols;
  std::fill(dst, dst + static_cast<std::size_t>(channels) * rows * cols, 0.0);
  for (int c = 0; c < channels; ++c) {
    double* img = dst + static_cast<std::size_t>(c) * rows * cols;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* d = src + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        for (int oh = 0; oh < out_rows; ++oh) {
          const int ih = oh * s - p + ki;
          if (ih < 0 || ih >= rows) continue;
          const double* drow = d + static_cast<std::size_t>(oh) * out_cols;
          double* irow = img + static_cast<std::size_t>(ih) * cols;
          for (int ow = 0; ow < out_cols; ++ow) {
            const int iw = ow * s - p + kj;
            if (iw >= 0 && iw < cols) irow[iw] += drow[ow];
          }
        }
      }
    }
  }
}

double activate(double z, Activation a, double slope) {
  switch (a) {
    case Activation::leaky_relu:
      return z > 0.0 ? z : slope * z;
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::identity:
      return z;
  }
  return z;
}

// Derivative expressed through the activation output.
double activation_slope(double y, Activation a, double slope) {
  switch (a) {
    case Activation::leaky_relu:
      return y > 0.0 ? 1.0 : slope;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::identity:
      return 1.0;
  }
  return 1.0;
}

Tensor layer_forward(const LayerSpec& L, const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                     double slope) {
  const int kk = L.kernel * L.kernel;
  if (L.kind == LayerKind::conv) {
    const int ho = L.output_size(x.rows);
    const int wo = L.output_size(x.cols);
    std::vector<double> cols(static_cast<std::size_t>(L.in) * kk * ho * wo);
    im2col(x.data.data(), L.in, x.rows, x.cols, L.kernel, L.stride, L.padding, ho, wo, cols.data());
    Tensor y(L.out, ho, wo);
    MapMat(y.data.data(), L.out, static_cast<Eigen::Index>(y.plane())).noalias() =
        MapConstMat(w.data(), L.out, L.in * kk) * MapConstMat(cols.data(), L.in * kk, ho * wo);
    for (int c = 0; c < L.out; ++c) {
      double* plane = y.data.data() + c * y.plane();
      for (std::size_t i = 0; i < y.plane(); ++i) plane[i] = activate(plane[i] + b[c], L.activation, slope);
    }
    return y;
  }
  const int ho = L.output_size(x.rows);
  const int wo = L.output_size(x.cols);
  std::vector<double> cols(static_cast<std::size_t>(L.out) * kk * x.plane());
  MapMat(cols.data(), L.out * kk, static_cast<Eigen::Index>(x.plane())).noalias() =
      MapConstMat(w.data(), L.in, L.out * kk).transpose() *
      MapConstMat(x.data.data(), L.in, static_cast<Eigen::Index>(x.plane()));
  Tensor y(L.out, ho, wo);
  col2im(cols.data(), L.out, ho, wo, L.kernel, L.stride, L.padding, x.rows, x.cols, y.data.data());
  for (int c = 0; c < L.out; ++c) {
    double* plane = y.data.data() + c * y.plane();
    for (std::size_t i = 0; i < y.plane(); ++i) plane[i] = activate(plane[i] + b[c], L.activation, slope);
  }
  return y;
}

// Returns the gradient w.r.t. the layer input; accumulates into dw/db.
Tensor layer_backward(const LayerSpec& L, const Tensor& x, const Tensor& y, const Tensor& dy,
                      const std::vector<double>& w, std::vector<double>& dw, std::vector<double>& db, double slope,
                      bool need_input_grad) {
  const int kk = L.kernel * L.kernel;
  std::vector<double> dz(dy.data.size());
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = dy.data[i] * activation_slope(y.data[i], L.activation, slope);
  for (int c = 0; c < L.out; ++c) {
    const double* plane = dz.data() + c * y.plane();
    double acc = 0.0;
    for (std::size_t i = 0; i < y.plane(); ++i) acc += plane[i];
    db[c] += acc;
  }
  const auto out_plane = static_cast<Eigen::Index>(y.plane());
  const auto in_plane = static_cast<Eigen::Index>(x.plane());
  Tensor dx;
  if (L.kind == LayerKind::conv) {
    std::vector<double> cols(static_cast<std::size_t>(L.in) * kk * y.plane());
    im2col(x.data.data(), L.in, x.rows, x.cols, L.kernel, L.stride, L.padding, y.rows, y.cols, cols.data());
    MapConstMat dzm(dz.data(), L.out, out_plane);
    MapMat(dw.data(), L.out, L.in * kk).noalias() += dzm * MapConstMat(cols.data(), L.in * kk, out_plane).transpose();
    if (need_input_grad) {
      MapMat(cols.data(), L.in * kk, out_plane).noalias() = MapConstMat(w.data(), L.out, L.in * kk).transpose() * dzm;
      dx = Tensor(L.in, x.rows, x.cols);
      col2im(cols.data(), L.in, x.rows, x.cols, L.kernel, L.stride, L.padding, y.rows, y.cols, dx.data.data());
    }
    return dx;
  }
  std::vector<double> cols(static_cast<std::size_t>(L.out) * kk * x.plane());
  im2col(dz.data(), L.out, y.rows, y.cols, L.kernel, L.stride, L.padding, x.rows, x.cols, cols.data());
  MapConstMat dcols(cols.data(), L.out * kk, in_plane);
  MapMat(dw.data(), L.in, L.out * kk).noalias() += MapConstMat(x.data.data(), L.in, in_plane) * dcols.transpose();
  if (need_input_grad) {
    dx = Tensor(L.in, x.rows, x.cols);
    MapMat(dx.data.data(), L.in, in_plane).noalias() = MapConstMat(w.data(), L.in, L.out * kk) * dcols;
  }
  return dx;
}

float round_f32(double v) { return static_cast<float>(v); }

}  // namespace

int LayerSpec::output_size(int input) const {
  if (kind == LayerKind::conv) {
    const int span = input + 2 * padding - kernel;
    if (span < 0 || span % stride != 0)
      throw ContractError("conv layer cannot map spatial size " + std::to_string(input) + " exactly");
    return span / stride + 1;
  }
  return (input - 1) * stride - 2 * padding + kernel;
}

ArchitectureSpec ArchitectureSpec::symmetric(const std::vector<int>& widths, int channels) {
  if (widths.empty()) throw ConfigError("architecture.widths must not be empty");
  ArchitectureSpec spec;
  int in = channels;
  for (int w : widths) {
    spec.layers.push_back({LayerKind::conv, in, w, 4, 2, 1, Activation::leaky_relu});
    in = w;
  }
  for (std::size_t i = widths.size(); i-- > 0;) {
    const bool last = i == 0;
    spec.layers.push_back({LayerKind::deconv, widths[i], last ? channels : widths[i - 1], 4, 2, 1,
                           last ? Activation::sigmoid : Activation::leaky_relu});
  }
  return spec;
}

ArchitectureSpec ArchitectureSpec::default_spec() { return symmetric({32, 64, 128, 256, 512}); }

std::size_t ArchitectureSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.weight_count() + static_cast<std::size_t>(L.out);
  return n;
}

std::size_t ArchitectureSpec::encoder_depth() const {
  std::size_t i = 0;
  while (i < layers.size() && layers[i].kind == LayerKind::conv) ++i;
  return i;
}

void ArchitectureSpec::validate() const {
  if (layers.empty()) throw ConfigError("architecture has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    if (L.in < 1 || L.out < 1 || L.kernel < 1 || L.stride < 1 || L.padding < 0)
      throw ConfigError("layer " + layer_name(i) + " has invalid geometry");
    if (i > 0 && layers[i - 1].out != L.in)
      throw ConfigError("layer " + layer_name(i) + " expects " + std::to_string(L.in) + " input channels but " +
                        layer_name(i - 1) + " produces " + std::to_string(layers[i - 1].out));
  }
  if (layers.back().out != layers.front().in) throw ConfigError("autoencoder output channels differ from input");
}

int ArchitectureSpec::size_multiple() const {
  int m = 1;
  for (const auto& L : layers)
    if (L.kind == LayerKind::conv) m *= L.stride;
  return m;
}

std::string ArchitectureSpec::layer_name(std::size_t i) const {
  const std::size_t enc = encoder_depth();
  return i < enc ? "enc" + std::to_string(i + 1) : "dec" + std::to_string(i - enc + 1);
}

std::string ArchitectureSpec::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    os << layer_name(i) << ": " << (L.kind == LayerKind::conv ? "conv" : "deconv") << " " << L.in << "->" << L.out
       << " k" << L.kernel << " s" << L.stride << " p" << L.padding << "\n";
  }
  os << "trainable parameters: " << param_count() << "\n";
  return os.str();
}

std::size_t ModelParams::param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    flat.insert(flat.end(), weights[i].begin(), weights[i].end());
    flat.insert(flat.end(), biases[i].begin(), biases[i].end());
  }
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != param_count()) throw ContractError("assign: parameter vector length mismatch");
  std::size_t k = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (auto& v : weights[i]) v = flat[k++];
    for (auto& v : biases[i]) v = flat[k++];
  }
  ++revision;
}

bool same_values(const ModelParams& a, const ModelParams& b) {
  return a.arch == b.arch && a.weights == b.weights && a.biases == b.biases;
}

ModelParams init_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams m;
  m.arch = spec;
  m.seed = seed;
  Rng rng(derive_seed(seed, "init"));
  for (const auto& L : spec.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(L.in) * L.kernel * L.kernel);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(L.weight_count());
    for (auto& v : w) v = round_f32(dist(rng));
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(static_cast<std::size_t>(L.out), 0.0);
  }
  return m;
}

Gradients Gradients::zeros_like(const ModelParams& m) {
  Gradients g;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    g.weights.emplace_back(m.weights[i].size(), 0.0);
    g.biases.emplace_back(m.biases[i].size(), 0.0);
  }
  return g;
}

void Gradients::add(const Gradients& o) {
  if (o.weights.size() != weights.size()) throw ContractError("gradient layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < weights[i].size(); ++j) weights[i][j] += o.weights[i][j];
    for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += o.biases[i][j];
  }
}

void Gradients::scale(double f) {
  for (auto& w : weights)
    for (auto& v : w) v *= f;
  for (auto& b : biases)
    for (auto& v : b) v *= f;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    flat.insert(flat.end(), weights[i].begin(), weights[i].end());
    flat.insert(flat.end(), biases[i].begin(), biases[i].end());
  }
  return flat;
}

SampleCache forward_sample(const RealGrid& x, const ModelParams& m) {
  const int mult = m.arch.size_multiple();
  if (x.rows() % mult || x.cols() % mult || x.rows() == 0 || x.cols() == 0)
    throw ContractError("forward: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                        " is not divisible by " + std::to_string(mult));
  if (m.arch.layers.front().in != 1) throw ContractError("forward: model expects multi-channel input");
  SampleCache cache;
  Tensor t(1, x.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), t.data.begin());
  cache.activations.push_back(std::move(t));
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i)
    cache.activations.push_back(
        layer_forward(m.arch.layers[i], cache.activations.back(), m.weights[i], m.biases[i], m.arch.leaky_slope));
  return cache;
}

Gradients backward_sample(const SampleCache& cache, const RealGrid& output_grad, const ModelParams& m) {
  const std::size_t n = m.arch.layers.size();
  if (cache.activations.size() != n + 1) throw ContractError("backward: cache does not match the model depth");
  const Tensor& out = cache.activations.back();
  if (out.rows != output_grad.rows() || out.cols != output_grad.cols() || out.channels != 1)
    throw ContractError("backward: output gradient shape mismatch");
  Gradients g = Gradients::zeros_like(m);
  Tensor dy(1, out.rows, out.cols);
  std::copy(output_grad.values().begin(), output_grad.values().end(), dy.data.begin());
  for (std::size_t i = n; i-- > 0;) {
    const auto& L = m.arch.layers[i];
    const Tensor& x = cache.activations[i];
    const Tensor& y = cache.activations[i + 1];
    if (x.channels != L.in || y.channels != L.out) throw ContractError("backward: stale cache for " + m.arch.layer_name(i));
    dy = layer_backward(L, x, y, dy, m.weights[i], g.weights[i], g.biases[i], m.arch.leaky_slope, i > 0);
  }
  return g;
}

namespace {

RealGrid to_grid(const Tensor& t) { return RealGrid(t.rows, t.cols, t.data); }

}  // namespace

ForwardResult forward(std::span<const RealGrid> batch, const ModelParams& m, int threads) {
  ForwardResult r;
  r.cache.samples.resize(batch.size());
  r.cache.revision = m.revision;
  r.cache.arch = m.arch;
  parallel_for(batch.size(), threads, [&](std::size_t i) { r.cache.samples[i] = forward_sample(batch[i], m); });
  const std::size_t enc = m.arch.encoder_depth();
  for (const auto& s : r.cache.samples) {
    r.latents.push_back(s.activations[enc]);
    r.outputs.push_back(to_grid(s.activations.back()));
  }
  return r;
}

Gradients backward(const ForwardCache& cache, std::span<const RealGrid> output_grads, const ModelParams& m,
                   int threads) {
  if (cache.revision != m.revision || !(cache.arch == m.arch))
    throw ContractError("backward: cache was produced by a different parameter revision");
  if (cache.samples.size() != output_grads.size()) throw ContractError("backward: batch size mismatch");
  std::vector<Gradients> per(cache.samples.size());
  parallel_for(per.size(), threads,
               [&](std::size_t i) { per[i] = backward_sample(cache.samples[i], output_grads[i], m); });
  Gradients total = Gradients::zeros_like(m);
  for (const auto& g : per) total.add(g);
  return total;
}

RealGrid reconstruct(const RealGrid& x, const ModelParams& m) {
  const int mult = m.arch.size_multiple();
  if (x.rows() % mult || x.cols() % mult || x.rows() == 0 || x.cols() == 0)
    throw ContractError("reconstruct: input size is not divisible by " + std::to_string(mult));
  Tensor t(1, x.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), t.data.begin());
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i)
    t = layer_forward(m.arch.layers[i], t, m.weights[i], m.biases[i], m.arch.leaky_slope);
  return to_grid(t);
}

namespace {

constexpr std::uint16_t kModelVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename U>
  void uint(U v) {
    std::array<unsigned char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(b.data(), b.size());
  }
  void f32(double v) { uint(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw FormatError(name_ + ": truncated model file");
  }
  template <typename U>
  U uint() {
    std::array<unsigned char, sizeof(U)> b{};
    bytes(b.data(), b.size());
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }
  double f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace

void save_model(const ModelParams& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path.string());
  Writer w(out);
  w.bytes("CWAE", 4);
  w.uint<std::uint16_t>(kModelVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.arch.layers.size()));
  w.f64(m.arch.leaky_slope);
  for (const auto& L : m.arch.layers) {
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(L.kind));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(L.activation));
    for (int v : {L.in, L.out, L.kernel, L.stride, L.padding}) w.uint<std::uint32_t>(static_cast<std::uint32_t>(v));
  }
  w.uint<std::uint64_t>(m.epochs_seen);
  w.uint<std::uint64_t>(m.seed);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.patch_size));
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    for (double v : m.weights[i]) w.f32(v);
    for (double v : m.biases[i]) w.f32(v);
  }
  if (!out) throw IoError("failed writing model file " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  Reader r(in, path.string());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  if (std::memcmp(magic.data(), "CWAE", 4) != 0) throw FormatError(path.string() + ": bad magic (expected CWAE)");
  const auto version = r.uint<std::uint16_t>();
  if (version != kModelVersion)
    throw FormatError(path.string() + ": unsupported model format version " + std::to_string(version));
  ModelParams m;
  const auto count = r.uint<std::uint32_t>();
  if (count == 0 || count > 1024) throw FormatError(path.string() + ": implausible layer count");
  m.arch.leaky_slope = r.f64();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec L;
    const auto kind = r.uint<std::uint8_t>();
    const auto act = r.uint<std::uint8_t>();
    if (kind > 1 || act > 2) throw FormatError(path.string() + ": unknown layer kind or activation");
    L.kind = static_cast<LayerKind>(kind);
    L.activation = static_cast<Activation>(act);
    std::array<int, 5> geo{};
    for (auto& v : geo) {
      const auto raw = r.uint<std::uint32_t>();
      if (raw > (1u << 16)) throw FormatError(path.string() + ": implausible layer geometry");
      v = static_cast<int>(raw);
    }
    L.in = geo[0];
    L.out = geo[1];
    L.kernel = geo[2];
    L.stride = geo[3];
    L.padding = geo[4];
    m.arch.layers.push_back(L);
  }
  try {
    m.arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.epochs_seen = r.uint<std::uint64_t>();
  m.seed = r.uint<std::uint64_t>();
  m.patch_size = static_cast<int>(r.uint<std::uint32_t>());
  for (const auto& L : m.arch.layers) {
    std::vector<double> w(L.weight_count());
    for (auto& v : w) v = r.f32();
    std::vector<double> b(static_cast<std::size_t>(L.out));
    for (auto& v : b) v = r.f32();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  return m;
}

}  // namespace texanom::autoencoder
