#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "texanom/grid.hpp"

namespace texanom::autoencoder {

enum class LayerKind : std::uint8_t { conv = 0, deconv = 1 };
enum class Activation : std::uint8_t { leaky_relu = 0, sigmoid = 1, identity = 2 };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int in = 1;
  int out = 1;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
  Activation activation = Activation::leaky_relu;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in) * out * kernel * kernel;
  }
  int output_size(int input) const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchitectureSpec {
  std::vector<LayerSpec> layers;
  double leaky_slope = 0.2;

  // Encoder: one stride-2 conv per width; decoder mirrors it back to `channels`.
  static ArchitectureSpec symmetric(const std::vector<int>& widths, int channels = 1);
  // Widths 32, 64, 128, 256, 512: 256x256 -> 8x8x512 -> 256x256.
  static ArchitectureSpec default_spec();

  std::size_t param_count() const;
  // Index one past the last encoder layer; its output is the latent code.
  std::size_t encoder_depth() const;
  // Checks channel chaining and throws ConfigError with the offending layer.
  void validate() const;
  // Input spatial size must be a multiple of this.
  int size_multiple() const;
  std::string describe() const;
  std::string layer_name(std::size_t i) const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// Weight layouts: conv layers store out x in x k x k, transposed-conv layers
// store in x out x k x k.
struct ModelParams {
  ArchitectureSpec arch;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::uint64_t epochs_seen = 0;
  std::uint64_t seed = 0;
  int patch_size = 0;
  // Bumped whenever parameter values change; forward caches remember it.
  std::uint64_t revision = 0;

  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

bool same_values(const ModelParams& a, const ModelParams& b);

// Uniform(-b, b) kernels with b = 1/sqrt(in * k * k), zero biases. Values are
// rounded to single precision so they survive the model file unchanged.
ModelParams init_model(const ArchitectureSpec& spec, std::uint64_t seed);

// Channel-major 3-D activation.
struct Tensor {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int r, int w) : channels(c), rows(r), cols(w), data(static_cast<std::size_t>(c) * r * w, 0.0) {}
  std::size_t plane() const { return static_cast<std::size_t>(rows) * cols; }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const ModelParams& m);
  void add(const Gradients& other);
  void scale(double factor);
  std::vector<double> flatten() const;
};

// Activations of one sample: layer inputs followed by the final output.
struct SampleCache {
  std::vector<Tensor> activations;
};

struct ForwardCache {
  std::vector<SampleCache> samples;
  std::uint64_t revision = 0;
  ArchitectureSpec arch;
};

struct ForwardResult {
  std::vector<Tensor> latents;
  std::vector<RealGrid> outputs;
  ForwardCache cache;
};

SampleCache forward_sample(const RealGrid& x, const ModelParams& m);
Gradients backward_sample(const SampleCache& cache, const RealGrid& output_grad, const ModelParams& m);

ForwardResult forward(std::span<const RealGrid> batch, const ModelParams& m, int threads = 1);
// Sum over the batch of per-sample parameter gradients.
Gradients backward(const ForwardCache& cache, std::span<const RealGrid> output_grads, const ModelParams& m,
                   int threads = 1);
// Reconstruction only, without keeping activations.
RealGrid reconstruct(const RealGrid& x, const ModelParams& m);

// "CWAE" | u16 version | architecture | metadata | f32 tensors (little-endian).
void save_model(const ModelParams& m, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace texanom::autoencoder
