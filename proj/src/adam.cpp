#include "texanom/adam.hpp"

#include <cmath>
#include <string>

namespace texanom::autoencoder {

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& st, double lr,
                 const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ContractError("adam_update: parameter/gradient size mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size()) throw ContractError("adam_update: optimizer state size mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

namespace {

void check_finite(std::span<const double> g, const std::string& name) {
  for (double v : g)
    if (!std::isfinite(v)) throw TrainingError("non-finite gradient in layer " + name);
}

void round_to_f32(std::span<double> p) {
  for (auto& v : p) v = static_cast<float>(v);
}

}  // namespace

void AdamOptimizer::step(ModelParams& params, const Gradients& grads, double lr) {
  const std::size_t n = params.weights.size();
  if (grads.weights.size() != n || grads.biases.size() != n)
    throw ContractError("AdamOptimizer: gradient layers do not match the model");
  for (std::size_t i = 0; i < n; ++i) {
    check_finite(grads.weights[i], params.arch.layer_name(i) + ".weight");
    check_finite(grads.biases[i], params.arch.layer_name(i) + ".bias");
  }
  weight_state_.resize(n);
  bias_state_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    adam_update(params.weights[i], grads.weights[i], weight_state_[i], lr, cfg_);
    adam_update(params.biases[i], grads.biases[i], bias_state_[i], lr, cfg_);
    round_to_f32(params.weights[i]);
    round_to_f32(params.biases[i]);
  }
  ++params.revision;
  ++steps_;
}

}  // namespace texanom::autoencoder
