#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "texanom/autoencoder.hpp"

namespace texanom::autoencoder {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// In-place bias-corrected ADAM update of one parameter block. State vectors are
// sized on first use.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const AdamConfig& cfg = {});

// Per-layer ADAM over a model. Rejects non-finite gradients with the layer name
// and keeps parameters representable in single precision.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const AdamConfig& cfg = {}) : cfg_(cfg) {}

  void step(ModelParams& params, const Gradients& grads, double lr);
  std::uint64_t steps() const { return steps_; }

 private:
  AdamConfig cfg_;
  std::vector<AdamState> weight_state_;
  std::vector<AdamState> bias_state_;
  std::uint64_t steps_ = 0;
};

}  // namespace texanom::autoencoder
