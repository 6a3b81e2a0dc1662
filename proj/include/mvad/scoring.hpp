#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvad/dataset.hpp"
#include "mvad/trainer.hpp"

namespace mvad {

struct ScoreBreakdown {
  std::vector<std::string> view_names;
  std::vector<std::string> sample_ids;
  std::optional<std::vector<int>> labels;
  Matrix rec;      // N x K
  Matrix con;      // N x K; zero when beta = 0 (never computed)
  Matrix weights;  // N x K
  std::vector<double> fused;
  double alpha = 1.0;
  double beta = 1.0;

  std::size_t num_samples() const { return fused.size(); }
};

struct ScoreOptions {
  std::optional<double> alpha;  // defaults to the model's scoring_alpha()
  std::optional<double> beta;   // defaults to the model's scoring_beta()
  bool uniform_weights = false;
};

// s_i = sum_k w_ik (alpha rec_ik + beta con_ik)
std::vector<double> fuse(const Matrix& rec, const Matrix& con, const Matrix& weights, double alpha,
                         double beta);

// Scales, encodes, scores every sample on its own; the result does not
// depend on which other samples are in `ds`.
ScoreBreakdown score(const TrainedModel& model, const MultiViewDataset& ds,
                     const ScoreOptions& options = {});

// Mann-Whitney AUROC with midranks. SingleClass unless both labels occur.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Average precision; tied scores enter as one threshold.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct MetricReport {
  double auroc = 0.0;
  double auprc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::string scores_digest;
};

MetricReport evaluate(std::span<const double> scores, std::span<const int> labels);

// scores.csv: id[,label],score,rec_<v>...,con_<v>...,w_<v>..., values as %.17g.
std::string scores_csv(const ScoreBreakdown& b);
void write_scores_csv(const std::filesystem::path& path, const ScoreBreakdown& b);
ScoreBreakdown parse_scores_csv(const std::string& text, const std::string& origin);
ScoreBreakdown read_scores_csv(const std::filesystem::path& path);

std::string metrics_json(const MetricReport& r, std::string_view variant, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment drivers. Each takes the full labelled dataset and applies the
// one-class split itself.
// ---------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  MetricReport report;
};

struct VariantSummary {
  Variant variant = Variant::kFull;
  std::vector<SeedRun> runs;
  double auroc_mean = 0.0;
  double auroc_std = 0.0;  // sample standard deviation, 0 for one seed
  double auprc_mean = 0.0;
  double auprc_std = 0.0;
};

// Per seed s the split and the training both use seed s. no_aa reuses the
// full model's backbone when both variants are requested.
std::vector<VariantSummary> ablate(const MultiViewDataset& data, const TrainConfig& cfg,
                                   std::span<const Variant> variants,
                                   std::span<const std::uint64_t> seeds, SplitSpec split,
                                   const ProgressFn& progress = {});

struct RobustnessPoint {
  double ratio = 0.0;
  std::size_t injected = 0;
  MetricReport report;
};

// One split + fit per ratio, all with split.seed and cfg.seed.
std::vector<RobustnessPoint> robustness_sweep(const MultiViewDataset& data, const TrainConfig& cfg,
                                              std::span<const double> ratios, SplitSpec split,
                                              const ProgressFn& progress = {});

struct SensitivityCell {
  double alpha = 0.0;
  double beta = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
};

// One fit; each (alpha, beta) re-fuses the same per-view scores.
std::vector<SensitivityCell> sensitivity_grid(const MultiViewDataset& data, const TrainConfig& cfg,
                                              std::span<const double> alphas,
                                              std::span<const double> betas, SplitSpec split,
                                              const ProgressFn& progress = {});
std::vector<SensitivityCell> sensitivity_grid(const ScoreBreakdown& scored,
                                              std::span<const double> alphas,
                                              std::span<const double> betas);

}  // namespace mvad
