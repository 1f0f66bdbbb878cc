#include "texanom/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "texanom/parallel.hpp"
#include "texanom/rng.hpp"

namespace texanom::autoencoder {

double TrainConfig::learning_rate_at(int epoch) const {
  return learning_rate * std::pow(lr_decay, std::floor(static_cast<double>(epoch) / lr_decay_every));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("train.lr_decay must be positive");
  if (lr_decay_every < 1) throw ConfigError("train.lr_decay_every must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (patch_size < 1) throw ConfigError("train.patch_size must be positive");
  if (patch_count == 0) throw ConfigError("train.patch_count must be positive");
  cwssim.validate();
}

TrainResult train(const std::vector<GrayImage>& images, const ArchitectureSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  if (cfg.patch_size % arch.size_multiple())
    throw ConfigError("train.patch_size " + std::to_string(cfg.patch_size) + " is not divisible by " +
                      std::to_string(arch.size_multiple()));

  const auto locations = dataio::sample_locations(images, {cfg.patch_size, cfg.patch_count, cfg.seed});
  const similarity::Loss loss(cfg.loss, cfg.patch_size, cfg.pyramid, cfg.cwssim);

  TrainResult result;
  result.model = init_model(arch, cfg.seed);
  result.model.patch_size = cfg.patch_size;
  AdamOptimizer optimizer(cfg.adam);

  std::vector<std::size_t> order(locations.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<double> sample_loss(batch);
  std::vector<Gradients> sample_grad(batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = cfg.learning_rate_at(epoch);

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t n = std::min(batch, order.size() - start);
      const double inv = 1.0 / static_cast<double>(n);
      parallel_for(n, cfg.threads, [&](std::size_t k) {
        const auto& loc = locations[order[start + k]];
        const GrayImage patch = crop(images[loc.image], loc.row, loc.col, cfg.patch_size, cfg.patch_size);
        const SampleCache cache = forward_sample(patch, result.model);
        const auto& out = cache.activations.back();
        const RealGrid y(out.rows, out.cols, out.data);
        auto lg = loss.value_and_grad(patch, y);
        sample_loss[k] = lg.loss;
        for (auto& v : lg.grad.values()) v *= inv;
        sample_grad[k] = backward_sample(cache, lg.grad, result.model);
      });
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < n; ++k) batch_loss += sample_loss[k];
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " (loss " << batch_loss * inv
           << ")";
        throw TrainingError(os.str());
      }
      Gradients total = Gradients::zeros_like(result.model);
      for (std::size_t k = 0; k < n; ++k) total.add(sample_grad[k]);
      optimizer.step(result.model, total, lr);
      epoch_loss += batch_loss;
    }
    const double mean = epoch_loss / static_cast<double>(order.size());
    result.loss_history.push_back(mean);
    result.model.epochs_seen = static_cast<std::uint64_t>(epoch + 1);
    if (on_epoch) on_epoch({epoch, mean, lr});
  }
  return result;
}

TrainResult train(const dataio::DatasetIndex& index, const ArchitectureSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  std::vector<GrayImage> images;
  images.reserve(index.train_normal.size());
  for (const auto& p : index.train_normal) images.push_back(dataio::load_image(p));
  return train(images, arch, cfg, on_epoch);
}

}  // namespace texanom::autoencoder
