#include "mvad/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mvad/errors.hpp"
#include "mvad/optim.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace {

InfoNceMode mode_of(const TrainConfig& cfg) {
  return cfg.faithful_infonce ? InfoNceMode::kFaithful : InfoNceMode::kStandard;
}

double effective_lambda(const TrainConfig& cfg, Variant variant) {
  return variant == Variant::kNoCc ? 0.0 : cfg.lambda;
}

bool uses_reconstruction(Variant variant) { return variant != Variant::kNoAe; }

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_views(std::span<const Matrix> views) {
  require(views.size() >= 2, ErrorKind::kConfigError, "multi-view training requires K >= 2 views");
  for (const Matrix& v : views) {
    require(v.rows() == views.front().rows(), ErrorKind::kDimensionError,
            "views disagree on the number of samples");
  }
}

void check_finite(double loss, int stage, std::size_t epoch, std::size_t batch) {
  require(std::isfinite(loss), ErrorKind::kNumericDivergence,
          "non-finite loss in stage " + std::to_string(stage) + ", epoch " +
              std::to_string(epoch) + ", batch " + std::to_string(batch));
}

std::vector<Matrix> slice_views(std::span<const Matrix> views, std::span<const std::size_t> rows) {
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (const Matrix& v : views) out.push_back(v.select_rows(rows));
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  if (order.empty()) return out;
  if (batch_size == 0 || batch_size >= order.size()) {
    out.emplace_back(order.begin(), order.end());
    return out;
  }
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    std::vector<std::size_t> tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

Matrix per_view_costs(std::span<const std::vector<double>> rec, const PairTable* con,
                      double lambda, std::size_t batch, std::size_t num_views) {
  require(rec.empty() || rec.size() == num_views, ErrorKind::kDimensionError,
          "reconstruction losses do not cover every view");
  Matrix c(batch, num_views);
  for (std::size_t k = 0; k < rec.size(); ++k) {
    require(rec[k].size() == batch, ErrorKind::kDimensionError, "reconstruction loss length");
    for (std::size_t i = 0; i < batch; ++i) c(i, k) = rec[k][i];
  }
  if (con != nullptr && lambda != 0.0) {
    require(con->num_views() == num_views && con->batch() == batch, ErrorKind::kDimensionError,
            "contrastive loss table shape");
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t k = 0; k < num_views; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < num_views; ++j) {
          if (j != k) s += (con->at(j, k, i) + con->at(k, j, i)) / 2.0;
        }
        c(i, k) += lambda / 2.0 * s;
      }
    }
  }
  return c;
}

LossBreakdown total_loss(std::span<const std::vector<double>> rec, const PairTable* con,
                         const Matrix& weights, double lambda) {
  const std::size_t b = weights.rows();
  const std::size_t kv = weights.cols();
  const Matrix c = per_view_costs(rec, con, lambda, b, kv);
  LossBreakdown out;
  out.per_sample.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < kv; ++k) s += weights(i, k) * c(i, k);
    out.per_sample[i] = s;
    out.total += s;
  }
  if (b > 0) out.total /= static_cast<double>(b);
  return out;
}

BackboneStep backbone_step(std::span<const ViewAutoencoder> aes, std::span<const Matrix> batch,
                           const Matrix& weights, double lambda, double tau, InfoNceMode mode,
                           bool use_reconstruction) {
  check_views(batch);
  const std::size_t kv = batch.size();
  const std::size_t b = batch.front().rows();
  require(aes.size() == kv, ErrorKind::kDimensionError, "one autoencoder per view expected");
  require(weights.rows() == b && weights.cols() == kv, ErrorKind::kDimensionError,
          "weights must be B x K");
  const double inv_b = 1.0 / static_cast<double>(b);

  BackboneStep step;
  step.traces.reserve(kv);
  for (std::size_t k = 0; k < kv; ++k) step.traces.push_back(forward(aes[k], batch[k], Mode::kTrain));

  std::vector<std::vector<double>> rec;
  if (use_reconstruction) {
    for (const ForwardTrace& t : step.traces) rec.push_back(recon_loss(t.input, t.reconstruction()));
  }
  const bool use_con = lambda > 0.0;
  ContrastiveCache cc;
  if (use_con) {
    std::vector<Matrix> latents;
    latents.reserve(kv);
    for (const ForwardTrace& t : step.traces) latents.push_back(t.latent());
    cc = contrastive_forward(latents, tau, mode);
  }
  step.loss = total_loss(rec, use_con ? &cc.loss : nullptr, weights, lambda);

  std::vector<Matrix> dz;
  if (use_con) {
    // d/dL^(j,k)_i of lambda * omega_ijk * (L^(j,k) + L^(k,j)) / (2B)
    PairTable coeff(kv, b);
    for (std::size_t j = 0; j < kv; ++j) {
      for (std::size_t k = 0; k < kv; ++k) {
        if (j == k) continue;
        for (std::size_t i = 0; i < b; ++i) {
          coeff.at(j, k, i) = lambda * pair_weight(weights.row(i), j, k) / 2.0 * inv_b;
        }
      }
    }
    dz = contrastive_backward(cc, coeff);
  }

  step.grads.reserve(kv);
  std::vector<double> rec_coeff(b);
  for (std::size_t k = 0; k < kv; ++k) {
    Matrix grec;
    if (use_reconstruction) {
      for (std::size_t i = 0; i < b; ++i) rec_coeff[i] = weights(i, k) * inv_b;
      grec = recon_loss_grad(step.traces[k].input, step.traces[k].reconstruction(), rec_coeff);
    }
    step.grads.push_back(backward(aes[k], step.traces[k], use_reconstruction ? &grec : nullptr,
                                  use_con ? &dz[k] : nullptr));
  }
  return step;
}

EstimatorStep estimator_step(const WeightEstimator& est, std::span<const Matrix> aligned,
                             const Matrix& costs) {
  require(!aligned.empty() && costs.cols() == aligned.size(), ErrorKind::kDimensionError,
          "one cost column per view expected");
  const std::size_t b = costs.rows();
  const std::size_t kv = costs.cols();
  const Matrix w = normalize_weights(raw_scores(est, aligned));
  require(w.rows() == b, ErrorKind::kDimensionError, "costs and features disagree on B");
  EstimatorStep step;
  Matrix gw(b, kv);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < kv; ++k) {
      step.loss += w(i, k) * costs(i, k);
      gw(i, k) = costs(i, k) / static_cast<double>(b);
    }
  }
  step.loss /= static_cast<double>(b);
  step.grads = estimator_backward(est, aligned, gw);
  return step;
}

Stage1Result train_stage1(std::span<const Matrix> views, const std::vector<std::string>& view_names,
                          const TrainConfig& cfg, Variant variant, const ProgressFn& progress) {
  check_views(views);
  cfg.validate();
  const std::size_t kv = views.size();
  const std::size_t n = views.front().rows();
  require(view_names.size() == kv, ErrorKind::kDimensionError, "one name per view expected");
  const double lambda = effective_lambda(cfg, variant);
  const bool use_rec = uses_reconstruction(variant);
  require(use_rec || lambda > 0.0, ErrorKind::kConfigError,
          "no_ae with lambda = 0 leaves nothing to train");
  require(n >= 2, ErrorKind::kBatchTooSmall, "training needs at least 2 samples");

  Stage1Result result;
  for (std::size_t k = 0; k < kv; ++k) {
    AutoencoderShape shape;
    shape.input_dim = views[k].cols();
    shape.hidden_dims = cfg.hidden_dims;
    shape.latent_dim = cfg.latent_dim;
    result.autoencoders.push_back(
        make_autoencoder(view_names[k], shape, derive_seed(cfg.seed, "backbone/init", k)));
  }

  Adam adam({cfg.backbone_lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  SeededRng shuffle(derive_seed(cfg.seed, "stage1/shuffle"));
  const InfoNceMode mode = mode_of(cfg);

  for (std::size_t epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    const std::vector<std::size_t> order = cfg.full_batch() ? iota(n) : shuffle.permutation(n);
    const auto batches = make_batches(order, cfg.batch_size);
    double epoch_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& rows = batches[bi];
      const std::size_t b = rows.size();
      const std::vector<Matrix> batch = slice_views(views, rows);
      BackboneStep step = backbone_step(result.autoencoders, batch, uniform_weights(b, kv), lambda,
                                        cfg.tau, mode, use_rec);
      check_finite(step.loss.total, 1, epoch, bi + 1);
      epoch_sum += step.loss.total * static_cast<double>(b);

      std::vector<TensorRef> params;
      std::vector<TensorRef> grads_flat;
      for (std::size_t k = 0; k < kv; ++k) {
        for (TensorRef& t : parameter_views(result.autoencoders[k])) params.push_back(std::move(t));
        for (TensorRef& t : gradient_views(step.grads[k])) grads_flat.push_back(std::move(t));
      }
      adam.step(params, grads_flat);
      for (std::size_t k = 0; k < kv; ++k) {
        update_running_stats(result.autoencoders[k], step.traces[k]);
      }
    }
    const double epoch_loss = epoch_sum / static_cast<double>(n);
    result.epoch_losses.push_back(epoch_loss);
    if (progress) progress({1, epoch, epoch_loss});
  }
  return result;
}

Matrix frozen_costs(std::span<const Matrix> views, std::span<const ViewAutoencoder> aes,
                    const TrainConfig& cfg, Variant variant) {
  check_views(views);
  const std::size_t kv = views.size();
  const std::size_t n = views.front().rows();
  require(aes.size() == kv, ErrorKind::kDimensionError, "one autoencoder per view expected");
  const double lambda = effective_lambda(cfg, variant);
  const bool use_rec = uses_reconstruction(variant);

  SeededRng rng(derive_seed(cfg.seed, "stage2/partition"));
  const std::vector<std::size_t> order = cfg.full_batch() ? iota(n) : rng.permutation(n);
  Matrix costs(n, kv);
  for (const auto& rows : make_batches(order, cfg.batch_size)) {
    const std::size_t b = rows.size();
    std::vector<std::vector<double>> rec;
    std::vector<Matrix> latents;
    for (std::size_t k = 0; k < kv; ++k) {
      const Matrix v = views[k].select_rows(rows);
      const ForwardTrace t = forward(aes[k], v, Mode::kEval);
      if (use_rec) rec.push_back(recon_loss(v, t.reconstruction()));
      if (lambda > 0.0) latents.push_back(t.latent());
    }
    ContrastiveCache cc;
    if (lambda > 0.0) cc = contrastive_forward(latents, cfg.tau, mode_of(cfg));
    const Matrix c = per_view_costs(rec, lambda > 0.0 ? &cc.loss : nullptr, lambda, b, kv);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < kv; ++k) costs(rows[i], k) = c(i, k);
    }
  }
  return costs;
}

Stage2Result train_stage2(std::span<const Matrix> views, std::span<const ViewAutoencoder> aes,
                          AllocationState allocation, const TrainConfig& cfg, Variant variant,
                          const ProgressFn& progress) {
  check_views(views);
  cfg.validate();
  const std::size_t kv = views.size();
  const std::size_t n = views.front().rows();
  require(allocation.num_views() == kv, ErrorKind::kDimensionError,
          "aligners must be fitted before stage 2");

  const std::vector<Matrix> aligned = align(allocation, views);
  const Matrix costs = frozen_costs(views, aes, cfg, variant);

  allocation.estimator = make_estimator(allocation.aligned_dim(), cfg.estimator_hidden,
                                        derive_seed(cfg.seed, "estimator/init"));
  allocation.estimator_active = true;

  Stage2Result result;
  Adam adam({cfg.allocation_lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  SeededRng shuffle(derive_seed(cfg.seed, "stage2/shuffle"));
  for (std::size_t epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
    const std::vector<std::size_t> order = cfg.full_batch() ? iota(n) : shuffle.permutation(n);
    const auto batches = make_batches(order, cfg.batch_size);
    double epoch_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& rows = batches[bi];
      const std::size_t b = rows.size();
      const std::vector<Matrix> feats = slice_views(aligned, rows);
      EstimatorStep step = estimator_step(allocation.estimator, feats, costs.select_rows(rows));
      check_finite(step.loss, 2, epoch, bi + 1);
      epoch_sum += step.loss * static_cast<double>(b);

      const auto params = parameter_views(allocation.estimator);
      const auto grads = gradient_views(step.grads);
      adam.step(params, grads);
    }
    const double epoch_loss = epoch_sum / static_cast<double>(n);
    result.epoch_losses.push_back(epoch_loss);
    if (progress) progress({2, epoch, epoch_loss});
  }
  result.allocation = std::move(allocation);
  return result;
}

ReferenceBank build_reference_bank(std::span<const Matrix> views,
                                   std::span<const ViewAutoencoder> aes, std::uint64_t seed) {
  check_views(views);
  const std::vector<std::size_t> rows = reference_bank_rows(views.front().rows(), seed);
  std::vector<Matrix> latents;
  for (std::size_t k = 0; k < views.size(); ++k) {
    latents.push_back(encode_eval(aes[k], views[k].select_rows(rows)));
  }
  return ReferenceBank(std::move(latents));
}

TrainedModel fit(const MultiViewDataset& train, const TrainConfig& cfg, Variant variant,
                 const ProgressFn& progress) {
  train.validate();
  require(train.num_views() >= 2, ErrorKind::kConfigError,
          "multi-view training requires K >= 2 views");
  cfg.validate();

  TrainedModel model;
  model.view_names = train.view_names;
  model.config = cfg;
  model.variant = variant;
  model.scaler = fit_scaler(train);
  const MultiViewDataset scaled = apply_scaler(model.scaler, train);

  Stage1Result s1 = train_stage1(scaled.views, scaled.view_names, cfg, variant, progress);
  model.autoencoders = std::move(s1.autoencoders);
  model.stage1_history = std::move(s1.epoch_losses);

  model.bank = build_reference_bank(scaled.views, model.autoencoders, derive_seed(cfg.seed, "bank"));

  std::vector<std::size_t> dims;
  for (const Matrix& v : scaled.views) dims.push_back(v.cols());
  const std::size_t d = alignment_dim(dims, scaled.num_samples(), cfg.pca_dim);
  AllocationState allocation;
  allocation.aligners = fit_aligners(scaled.views, d);

  if (variant == Variant::kNoAa) {
    allocation.estimator = zero_estimator(d, cfg.estimator_hidden);
    allocation.estimator_active = false;
    model.allocation = std::move(allocation);
  } else {
    Stage2Result s2 = train_stage2(scaled.views, model.autoencoders, std::move(allocation), cfg,
                                   variant, progress);
    model.allocation = std::move(s2.allocation);
    model.stage2_history = std::move(s2.epoch_losses);
  }
  return model;
}

}  // namespace mvad
