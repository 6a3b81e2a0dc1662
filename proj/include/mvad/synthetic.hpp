#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mvad/dataset.hpp"

namespace mvad {

enum class AnomalyMode { kOffManifold, kViewSwap, kMixed };

AnomalyMode parse_anomaly_mode(std::string_view text);
std::string_view anomaly_mode_name(AnomalyMode mode);

// Low-rank multi-view generator. Normal samples share a latent
// u ~ N(0, I_r) observed in view k as A_k u + noise, with A_k fixed per seed
// and entries N(0, 1) / sqrt(r). Anomalies:
//   off-manifold: every view gets its own latent, scaled by 3
//   view-swap:    every view gets its own unit-scale latent, so each view
//                 looks normal on its own but the views disagree
//   mixed:        floor(n_anomaly / 2) off-manifold, the rest view-swap
struct SyntheticConfig {
  std::size_t num_views = 3;
  std::size_t view_dim = 64;
  std::size_t n_normal = 2600;
  std::size_t n_anomaly = 60;
  std::size_t latent_rank = 8;
  double noise = 0.05;
  AnomalyMode mode = AnomalyMode::kMixed;
  std::uint64_t seed = 0;
};

// Normals come first, then anomalies; ids are "n<idx>", "off<idx>", "swap<idx>".
MultiViewDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace mvad
