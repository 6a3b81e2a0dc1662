#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "mvad/digest.hpp"
#include "mvad/synthetic.hpp"
#include "mvad/trainer.hpp"
#include "support.hpp"
#include "tiny_model.hpp"

namespace mvad {
namespace {

using testing::check_gradients;
using testing::error_kind_of;
using testing::random_matrix;
using testing::tiny_config;
using testing::tiny_data;

std::string parameter_hash(std::span<const ViewAutoencoder> aes) {
  std::string bytes;
  for (const ViewAutoencoder& ae : aes) {
    ViewAutoencoder copy = ae;
    for (const TensorRef& t : parameter_views(copy)) {
      bytes.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
    }
    for (const TensorRef& t : buffer_views(copy)) {
      bytes.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
    }
  }
  return fnv1a_hex(bytes);
}

TEST(TotalLoss, HandExample) {
  const std::vector<std::vector<double>> rec{{0.2}, {0.4}};
  PairTable con(2, 1);
  con.at(0, 1, 0) = 0.6;
  con.at(1, 0, 0) = 0.6;
  const LossBreakdown l = total_loss(rec, &con, uniform_weights(1, 2), 1.0);
  EXPECT_NEAR(l.total, 0.6, 1e-15);
  EXPECT_NEAR(l.per_sample[0], 0.6, 1e-15);
  const LossBreakdown no_con = total_loss(rec, &con, uniform_weights(1, 2), 0.0);
  EXPECT_NEAR(no_con.total, 0.3, 1e-15);
}

// Direct enumeration: sum_k w_k rec_k + lambda sum_{j<k} omega_jk (L_jk + L_kj) / 2.
TEST(TotalLoss, MatchesUnorderedPairEnumeration) {
  SeededRng rng(91);
  const std::size_t kv = 4, b = 7;
  std::vector<std::vector<double>> rec(kv, std::vector<double>(b));
  for (auto& r : rec) {
    for (double& x : r) x = rng.uniform(0.0, 3.0);
  }
  PairTable con(kv, b);
  for (std::size_t j = 0; j < kv; ++j) {
    for (std::size_t k = 0; k < kv; ++k) {
      for (std::size_t i = 0; i < b; ++i) con.at(j, k, i) = j == k ? 0.0 : rng.uniform(-1.0, 4.0);
    }
  }
  const Matrix w = normalize_weights(random_matrix(b, kv, rng, -2.0, 2.0));
  const double lambda = 0.7;
  const LossBreakdown l = total_loss(rec, &con, w, lambda);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < kv; ++k) s += w(i, k) * rec[k][i];
    for (std::size_t j = 0; j < kv; ++j) {
      for (std::size_t k = j + 1; k < kv; ++k) {
        const double omega = (w(i, j) + w(i, k)) / 2.0;
        s += lambda * omega * (con.at(j, k, i) + con.at(k, j, i)) / 2.0;
      }
    }
    EXPECT_NEAR(l.per_sample[i], s, 1e-12);
    total += s;
  }
  EXPECT_NEAR(l.total, total / b, 1e-12);
}

TEST(TotalLoss, EqualReconstructionWithoutContrastIsWeightInvariant) {
  SeededRng rng(92);
  const std::vector<std::vector<double>> rec{{0.3, 1.1}, {0.3, 1.1}, {0.3, 1.1}};
  const double a = total_loss(rec, nullptr, uniform_weights(2, 3), 1.0).total;
  const double b = total_loss(rec, nullptr, normalize_weights(random_matrix(2, 3, rng)), 1.0).total;
  EXPECT_NEAR(a, b, 1e-15);
}

TEST(MakeBatches, SizesAndFolding) {
  std::vector<std::size_t> order(10);
  for (std::size_t i = 0; i < 10; ++i) order[i] = 9 - i;
  auto b = make_batches(order, 3);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2], (std::vector<std::size_t>{3, 2, 1, 0}));
  b = make_batches(order, 4);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].size(), 2u);
  EXPECT_EQ(make_batches(order, 0).size(), 1u);
  EXPECT_EQ(make_batches(order, 50).front().size(), 10u);
  EXPECT_TRUE(make_batches(std::vector<std::size_t>{}, 4).empty());
}

struct StepFixture {
  std::vector<ViewAutoencoder> aes;
  std::vector<Matrix> batch;
  Matrix weights;
};

StepFixture step_fixture(SeededRng& rng) {
  StepFixture f;
  const std::size_t dims[] = {5, 6};
  for (std::size_t k = 0; k < 2; ++k) {
    AutoencoderShape shape;
    shape.input_dim = dims[k];
    shape.hidden_dims = {5};
    shape.latent_dim = 3;
    f.aes.push_back(make_autoencoder("v" + std::to_string(k), shape, rng.next_u64()));
    for (TensorRef& t : parameter_views(f.aes.back())) {
      for (double& x : t.data) x += rng.uniform(-0.2, 0.2);
    }
    f.batch.push_back(random_matrix(6, dims[k], rng, 0.0, 1.0));
  }
  f.weights = normalize_weights(random_matrix(6, 2, rng, -1.0, 1.0));
  return f;
}

TEST(BackboneStep, GradientsMatchFiniteDifferences) {
  SeededRng rng(93);
  for (InfoNceMode mode : {InfoNceMode::kFaithful, InfoNceMode::kStandard}) {
    for (bool use_rec : {true, false}) {
      StepFixture f = step_fixture(rng);
      BackboneStep step = backbone_step(f.aes, f.batch, f.weights, 0.8, 0.5, mode, use_rec);
      std::vector<TensorRef> params, grads;
      for (std::size_t k = 0; k < 2; ++k) {
        for (TensorRef& t : parameter_views(f.aes[k])) params.push_back(t);
        for (TensorRef& t : gradient_views(step.grads[k])) grads.push_back(t);
      }
      const auto result = check_gradients(params, grads, [&] {
        return backbone_step(f.aes, f.batch, f.weights, 0.8, 0.5, mode, use_rec).loss.total;
      });
      EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
    }
  }
}

TEST(EstimatorStep, GradientsMatchFiniteDifferences) {
  SeededRng rng(94);
  WeightEstimator est = make_estimator(5, 7, 4);
  std::vector<Matrix> aligned;
  for (int k = 0; k < 3; ++k) aligned.push_back(random_matrix(8, 5, rng));
  const Matrix costs = random_matrix(8, 3, rng, 0.0, 4.0);
  EstimatorStep step = estimator_step(est, aligned, costs);
  const auto result = check_gradients(parameter_views(est), gradient_views(step.grads),
                                      [&] { return estimator_step(est, aligned, costs).loss; });
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
}

TEST(Stage1, ZeroLambdaNeverEvaluatesMatchProbabilities) {
  const MultiViewDataset ds = tiny_data(40, 1);
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  const std::uint64_t before = match_prob_evaluations();
  train_stage1(ds.views, ds.view_names, cfg, Variant::kFull);
  EXPECT_EQ(match_prob_evaluations(), before);
  cfg.lambda = 1.0;
  train_stage1(ds.views, ds.view_names, cfg, Variant::kNoCc);
  EXPECT_EQ(match_prob_evaluations(), before);
  train_stage1(ds.views, ds.view_names, cfg, Variant::kFull);
  EXPECT_GT(match_prob_evaluations(), before);
}

TEST(Stage1, DeterministicAndLossDecreases) {
  const MultiViewDataset ds = apply_scaler(fit_scaler(tiny_data(120, 2)), tiny_data(120, 2));
  TrainConfig cfg = tiny_config();
  cfg.stage1_epochs = 15;
  std::vector<EpochReport> reports;
  const Stage1Result a = train_stage1(ds.views, ds.view_names, cfg, Variant::kFull,
                                      [&](const EpochReport& r) { reports.push_back(r); });
  const Stage1Result b = train_stage1(ds.views, ds.view_names, cfg, Variant::kFull);
  EXPECT_EQ(parameter_hash(a.autoencoders), parameter_hash(b.autoencoders));
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  ASSERT_EQ(reports.size(), 15u);
  EXPECT_EQ(reports.back().epoch, 15u);
  EXPECT_EQ(reports.back().stage, 1);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
  cfg.seed = 1;
  EXPECT_NE(parameter_hash(train_stage1(ds.views, ds.view_names, cfg, Variant::kFull).autoencoders),
            parameter_hash(a.autoencoders));
}

TEST(Stage1, DivergenceAborts) {
  const MultiViewDataset ds = tiny_data(40, 3);
  TrainConfig cfg = tiny_config();
  cfg.backbone_lr = 1e300;
  EXPECT_EQ(error_kind_of([&] { train_stage1(ds.views, ds.view_names, cfg, Variant::kFull); }),
            ErrorKind::kNumericDivergence);
}

TEST(Stage2, BackboneFrozenAndDeterministic) {
  const MultiViewDataset ds = apply_scaler(fit_scaler(tiny_data(80, 4)), tiny_data(80, 4));
  const TrainConfig cfg = tiny_config();
  const Stage1Result s1 = train_stage1(ds.views, ds.view_names, cfg, Variant::kFull);
  const std::string before = parameter_hash(s1.autoencoders);
  AllocationState state;
  state.aligners = fit_aligners(ds.views, 6);
  const Stage2Result a = train_stage2(ds.views, s1.autoencoders, state, cfg, Variant::kFull);
  EXPECT_EQ(parameter_hash(s1.autoencoders), before);
  const Stage2Result b = train_stage2(ds.views, s1.autoencoders, state, cfg, Variant::kFull);
  EXPECT_EQ(a.allocation.estimator.w1, b.allocation.estimator.w1);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  EXPECT_TRUE(a.allocation.estimator_active);
  EXPECT_EQ(a.epoch_losses.size(), cfg.stage2_epochs);
}

// View 0 reconstructs every sample ten times worse than view 1, so stage 2
// should move weight onto view 1.
TEST(Stage2, FavoursTheCheaperView) {
  SeededRng rng(95);
  const std::size_t n = 200;
  std::vector<Matrix> views{Matrix(n, 10), Matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 10; ++c) views[0](i, c) = static_cast<double>(rng.below(2));
    views[1](i, 0) = static_cast<double>(rng.below(2));
  }
  std::vector<ViewAutoencoder> aes;
  for (std::size_t k = 0; k < 2; ++k) {
    AutoencoderShape shape;
    shape.input_dim = views[k].cols();
    shape.hidden_dims = {4};
    shape.latent_dim = 2;
    aes.push_back(make_autoencoder("v", shape, k));
    for (double& w : aes.back().decoder.back().weight.values()) w = 0.0;
  }
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  cfg.stage2_epochs = 30;
  cfg.allocation_lr = 1e-2;
  const Matrix costs = frozen_costs(views, aes, cfg, Variant::kFull);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_DOUBLE_EQ(costs(i, 0), 2.5);
    EXPECT_DOUBLE_EQ(costs(i, 1), 0.25);
  }
  AllocationState state;
  state.aligners = fit_aligners(views, 1);
  const Stage2Result s2 = train_stage2(views, aes, state, cfg, Variant::kFull);
  const Matrix w = estimate_weights(s2.allocation, align(s2.allocation, views));
  double w0 = 0.0, w1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w0 += w(i, 0);
    w1 += w(i, 1);
  }
  EXPECT_GT(w1, w0);
  EXPECT_LT(s2.epoch_losses.back(), s2.epoch_losses.front());
}

TEST(Fit, AssemblesAConsistentModel) {
  const MultiViewDataset ds = tiny_data(60, 5);
  const TrainConfig cfg = tiny_config();
  const TrainedModel m = fit(ds, cfg);
  EXPECT_EQ(m.num_views(), 3u);
  EXPECT_EQ(m.bank.size(), 60u);
  EXPECT_EQ(m.allocation.aligned_dim(), 6u);
  EXPECT_TRUE(m.allocation.estimator_active);
  EXPECT_EQ(m.stage1_history.size(), cfg.stage1_epochs);
  EXPECT_EQ(m.stage2_history.size(), cfg.stage2_epochs);
  const TrainedModel no_aa = fit(ds, cfg, Variant::kNoAa);
  EXPECT_FALSE(no_aa.allocation.estimator_active);
  EXPECT_TRUE(no_aa.stage2_history.empty());
  EXPECT_EQ(parameter_hash(no_aa.autoencoders), parameter_hash(m.autoencoders));
}

TEST(Fit, RejectsSingleViewAndBadConfig) {
  MultiViewDataset ds = tiny_data(30, 6);
  TrainConfig cfg = tiny_config();
  MultiViewDataset one;
  one.view_names = {ds.view_names[0]};
  one.views = {ds.views[0]};
  one.sample_ids = ds.sample_ids;
  EXPECT_EQ(error_kind_of([&] { fit(one, cfg); }), ErrorKind::kConfigError);
  cfg.tau = 0.0;
  EXPECT_EQ(error_kind_of([&] { fit(ds, cfg); }), ErrorKind::kConfigError);
  cfg = tiny_config();
  cfg.lambda = 0.0;
  EXPECT_EQ(error_kind_of([&] { fit(ds, cfg, Variant::kNoAe); }), ErrorKind::kConfigError);
}

}  // namespace
}  // namespace mvad
