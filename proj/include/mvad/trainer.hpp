#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvad/allocation.hpp"
#include "mvad/backbone.hpp"
#include "mvad/config.hpp"
#include "mvad/contrastive.hpp"
#include "mvad/dataset.hpp"

namespace mvad {

struct TrainedModel {
  std::vector<std::string> view_names;
  TrainConfig config;
  Variant variant = Variant::kFull;
  MinMaxScaler scaler;
  std::vector<ViewAutoencoder> autoencoders;
  ReferenceBank bank;
  AllocationState allocation;
  std::vector<double> stage1_history;
  std::vector<double> stage2_history;

  std::size_t num_views() const { return autoencoders.size(); }
  InfoNceMode infonce_mode() const {
    return config.faithful_infonce ? InfoNceMode::kFaithful : InfoNceMode::kStandard;
  }
  // Fusion coefficients after the variant is applied.
  double scoring_alpha() const { return variant == Variant::kNoAe ? 0.0 : config.alpha; }
  double scoring_beta() const { return variant == Variant::kNoCc ? 0.0 : config.beta; }
};

struct EpochReport {
  int stage = 1;
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
};
using ProgressFn = std::function<void(const EpochReport&)>;

// Mini-batches over `order`; a trailing batch of one sample joins the batch
// before it. batch_size 0 gives a single batch.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size);

// c_ik = L_rec_ik + (lambda / 2) sum_{j != k} (L_con^(j,k) + L_con^(k,j)) / 2,
// so that sum_k w_ik c_ik is sample i's term of the overall loss. `rec` holds
// one vector per view (or is empty to drop the reconstruction term); `con`
// may be null.
Matrix per_view_costs(std::span<const std::vector<double>> rec, const PairTable* con,
                      double lambda, std::size_t batch, std::size_t num_views);

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_sample;
};

// (1/B) sum_i [ sum_k w_ik L_rec_ik + lambda sum_{j<k} omega_ijk Lbar_con_ijk ]
LossBreakdown total_loss(std::span<const std::vector<double>> rec, const PairTable* con,
                         const Matrix& weights, double lambda);

// Objective and gradients of one backbone step on a mini-batch. `weights` is
// B x K; stage 1 passes uniform rows. Running statistics are not touched.
struct BackboneStep {
  std::vector<ForwardTrace> traces;
  LossBreakdown loss;
  std::vector<AutoencoderGrads> grads;
};

BackboneStep backbone_step(std::span<const ViewAutoencoder> aes, std::span<const Matrix> batch,
                           const Matrix& weights, double lambda, double tau, InfoNceMode mode,
                           bool use_reconstruction);

// (1/B) sum_i sum_k w_ik c_ik with w from the estimator, and its gradient with
// respect to the estimator parameters. `costs` is B x K and held fixed.
struct EstimatorStep {
  double loss = 0.0;
  EstimatorGrads grads;
};

EstimatorStep estimator_step(const WeightEstimator& est, std::span<const Matrix> aligned,
                             const Matrix& costs);

struct Stage1Result {
  std::vector<ViewAutoencoder> autoencoders;
  std::vector<double> epoch_losses;
};

// Backbone training under uniform weights. Views are already scaled.
Stage1Result train_stage1(std::span<const Matrix> views, const std::vector<std::string>& view_names,
                          const TrainConfig& cfg, Variant variant, const ProgressFn& progress = {});

// Per-sample, per-view costs from the frozen backbone: eval-mode forward and
// in-batch contrastive terms over a fixed seeded partition of the rows.
Matrix frozen_costs(std::span<const Matrix> views, std::span<const ViewAutoencoder> aes,
                    const TrainConfig& cfg, Variant variant);

struct Stage2Result {
  AllocationState allocation;
  std::vector<double> epoch_losses;
};

// Estimator training with the backbone frozen. `allocation` carries fitted
// aligners; its estimator is re-initialised from the run seed.
Stage2Result train_stage2(std::span<const Matrix> views, std::span<const ViewAutoencoder> aes,
                          AllocationState allocation, const TrainConfig& cfg, Variant variant,
                          const ProgressFn& progress = {});

// Eval-mode latents of the bank rows.
ReferenceBank build_reference_bank(std::span<const Matrix> views,
                                   std::span<const ViewAutoencoder> aes, std::uint64_t seed);

// Scaler, stage 1, reference bank, aligners, stage 2. `train` is used as is;
// splitting is the caller's concern.
TrainedModel fit(const MultiViewDataset& train, const TrainConfig& cfg,
                 Variant variant = Variant::kFull, const ProgressFn& progress = {});

// Model directory: meta.json plus one float64 MVEB blob per tensor.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
// ModelIncomplete if any blob or meta entry is missing or inconsistent.
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace mvad
