#pragma once

#include <cstddef>
#include <cstdint>

#include "mvad/config.hpp"
#include "mvad/synthetic.hpp"

namespace mvad::testing {

// Small enough that a full fit takes milliseconds.
inline TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.stage1_epochs = 4;
  cfg.stage2_epochs = 4;
  cfg.batch_size = 16;
  cfg.hidden_dims = {12};
  cfg.latent_dim = 4;
  cfg.pca_dim = 6;
  cfg.estimator_hidden = 8;
  cfg.backbone_lr = 3e-3;
  cfg.allocation_lr = 3e-3;
  return cfg;
}

inline MultiViewDataset tiny_data(std::size_t n, std::uint64_t seed, std::size_t n_anomaly = 0) {
  SyntheticConfig s;
  s.view_dim = 10;
  s.n_normal = n;
  s.n_anomaly = n_anomaly;
  s.latent_rank = 3;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace mvad::testing
