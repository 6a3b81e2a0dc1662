#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mvad {

// Ablation variants. no_aa skips stage 2 and fuses uniformly; no_cc trains
// with lambda = 0 and scores with beta = 0; no_ae drops the reconstruction
// term from training and scores with alpha = 0.
enum class Variant { kFull, kNoAa, kNoCc, kNoAe };

// Accepts both "no_cc" and "no-cc" spellings.
Variant parse_variant(std::string_view text);
std::string_view variant_name(Variant v);

struct TrainConfig {
  std::size_t stage1_epochs = 100;
  std::size_t stage2_epochs = 50;
  double backbone_lr = 1e-3;
  double allocation_lr = 1e-3;
  std::size_t batch_size = 256;  // 0 = full batch
  double lambda = 1.0;
  double tau = 0.5;
  double alpha = 1.0;
  double beta = 1.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool faithful_infonce = true;
  std::vector<std::size_t> hidden_dims{512, 256};
  std::size_t latent_dim = 128;
  std::size_t pca_dim = 128;
  std::size_t estimator_hidden = 64;

  bool full_batch() const { return batch_size == 0; }
  // ConfigError naming the offending field.
  void validate() const;
};

// JSON object with exactly the TrainConfig field names; "batch_size" may be a
// positive integer or "full". Missing keys keep their defaults, unknown keys
// are a ConfigError.
TrainConfig parse_train_config(const std::string& json_text, const std::string& origin);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_json(const TrainConfig& cfg, int indent = 2);

// 16 hex digits identifying a config (FNV-1a over its compact JSON form).
std::string config_digest(const TrainConfig& cfg);

}  // namespace mvad
