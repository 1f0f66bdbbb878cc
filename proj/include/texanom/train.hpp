#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "texanom/adam.hpp"
#include "texanom/autoencoder.hpp"
#include "texanom/dataio.hpp"
#include "texanom/pyramid.hpp"
#include "texanom/similarity.hpp"

namespace texanom::autoencoder {

struct TrainConfig {
  similarity::LossKind loss = similarity::LossKind::cwssim;
  int epochs = 400;
  double learning_rate = 1e-3;
  double lr_decay = 0.5;
  int lr_decay_every = 20;
  int batch_size = 8;
  std::size_t patch_count = 50000;
  int patch_size = 256;
  std::uint64_t seed = 0;
  pyramid::DecomposerConfig pyramid{6, 5, 256, 256};
  similarity::CwssimConfig cwssim{};
  AdamConfig adam{};
  int threads = 1;

  // learning_rate * lr_decay^floor(epoch / lr_decay_every), epochs counted from 0.
  double learning_rate_at(int epoch) const;
  void validate() const;
};

struct EpochReport {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
};

using EpochCallback = std::function<void(const EpochReport&)>;

struct TrainResult {
  ModelParams model;
  std::vector<double> loss_history;
};

// Trains on patches cropped from `images` at the sampled locations. Each epoch is
// one seeded shuffle of the patch set in batches of batch_size.
TrainResult train(const std::vector<GrayImage>& images, const ArchitectureSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
TrainResult train(const dataio::DatasetIndex& index, const ArchitectureSpec& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace texanom::autoencoder
