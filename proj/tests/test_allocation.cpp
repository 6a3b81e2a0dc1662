#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mvad/allocation.hpp"
#include "support.hpp"

namespace mvad {
namespace {

using testing::check_gradients;
using testing::error_kind_of;
using testing::random_matrix;
using testing::random_normal_matrix;

std::vector<Matrix> random_aligned(std::size_t k, std::size_t n, std::size_t d, SeededRng& rng) {
  std::vector<Matrix> out;
  for (std::size_t v = 0; v < k; ++v) out.push_back(random_normal_matrix(n, d, rng));
  return out;
}

TEST(AlignmentDim, CappedBySmallestViewAndTrainSize) {
  const std::vector<std::size_t> dims{1536, 1536, 3072};
  EXPECT_EQ(alignment_dim(dims, 5000), 128u);
  EXPECT_EQ(alignment_dim(dims, 50), 49u);
  const std::vector<std::size_t> narrow{300, 64, 900};
  EXPECT_EQ(alignment_dim(narrow, 5000), 64u);
  EXPECT_EQ(alignment_dim(narrow, 5000, 32), 32u);
  EXPECT_EQ(error_kind_of([&] { alignment_dim(dims, 1); }), ErrorKind::kDegenerateInput);
}

TEST(Align, TrainingVariancesEqualExplainedVariance) {
  SeededRng rng(71);
  std::vector<Matrix> views{random_matrix(80, 12, rng), random_matrix(80, 20, rng, 0.0, 3.0)};
  AllocationState state;
  state.aligners = fit_aligners(views, 6);
  const std::vector<Matrix> aligned = align(state, views);
  for (std::size_t k = 0; k < 2; ++k) {
    ASSERT_EQ(aligned[k].cols(), 6u);
    for (std::size_t c = 0; c < 6; ++c) {
      double mean = 0.0, var = 0.0;
      for (std::size_t r = 0; r < 80; ++r) mean += aligned[k](r, c) / 80.0;
      for (std::size_t r = 0; r < 80; ++r) var += std::pow(aligned[k](r, c) - mean, 2) / 79.0;
      EXPECT_NEAR(var, state.aligners[k].explained_variance[c], 1e-10);
    }
  }
  Matrix mean_row(1, 12);
  for (std::size_t c = 0; c < 12; ++c) mean_row(0, c) = state.aligners[0].mean[c];
  const std::vector<Matrix> probe{mean_row, Matrix(1, 20)};
  const std::vector<Matrix> probed = align(state, probe);
  for (double v : probed[0].values()) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_EQ(error_kind_of([&] { align(state, std::vector<Matrix>{views[0]}); }),
            ErrorKind::kDimensionError);
}

TEST(Weights, ZeroEstimatorAndInactiveStateGiveUniformRows) {
  SeededRng rng(72);
  const std::vector<Matrix> aligned = random_aligned(3, 10, 5, rng);
  const Matrix w = normalize_weights(raw_scores(zero_estimator(5, 8), aligned));
  for (double v : w.values()) EXPECT_EQ(v, 1.0 / 3.0);
  AllocationState state;
  state.aligners.resize(3);
  state.estimator = make_estimator(5, 8, 1);
  state.estimator_active = false;
  EXPECT_EQ(estimate_weights(state, aligned), uniform_weights(10, 3));
  state.estimator_active = true;
  EXPECT_NE(estimate_weights(state, aligned), uniform_weights(10, 3));
}

TEST(Weights, HandSigmoidExample) {
  const double r = std::log(4.0);  // sigmoid(r) = 0.8, sigmoid(-r) = 0.2
  const Matrix w = normalize_weights(Matrix::from_rows({{r, -r}}));
  EXPECT_NEAR(w(0, 0), 0.8, 1e-12);
  EXPECT_NEAR(w(0, 1), 0.2, 1e-12);
  EXPECT_NEAR(pair_weight(w.row(0), 0, 1), 0.5, 1e-15);
}

TEST(Weights, ShiftChangesWeights) {
  SeededRng rng(73);
  Matrix raw = random_matrix(1, 4, rng, -2.0, 2.0);
  const Matrix a = normalize_weights(raw);
  for (double& v : raw.values()) v += 5.0;
  const Matrix b = normalize_weights(raw);
  EXPECT_NE(a, b);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_GT(std::abs(a(0, k) - b(0, k)), 1e-3);
}

TEST(Weights, RowsSumToOneStrictlyInside) {
  SeededRng rng(74);
  const Matrix w = normalize_weights(random_matrix(500, 5, rng, -30.0, 30.0));
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    for (double v : w.row(r)) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(PairWeight, UniformPairsSumToOne) {
  const Matrix w = uniform_weights(1, 3);
  double s = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = j + 1; k < 3; ++k) {
      EXPECT_EQ(pair_weight(w.row(0), j, k), 1.0 / 3.0);
      s += pair_weight(w.row(0), j, k);
    }
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_EQ(error_kind_of([&] { pair_weight(w.row(0), 0, 3); }), ErrorKind::kDimensionError);
}

TEST(TopViewHistogram, ExamplesAndTieRule) {
  EXPECT_EQ(top_view_histogram(Matrix::from_rows({{0.6, 0.4}, {0.3, 0.7}})),
            (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(top_view_histogram(uniform_weights(9, 3)), (std::vector<std::size_t>{9, 0, 0}));
  SeededRng rng(75);
  const auto h = top_view_histogram(normalize_weights(random_matrix(77, 4, rng)));
  EXPECT_EQ(h[0] + h[1] + h[2] + h[3], 77u);
}

TEST(Estimator, InitAndShapes) {
  const WeightEstimator est = make_estimator(128, 64, 5);
  EXPECT_EQ(est.input_dim(), 128u);
  EXPECT_EQ(est.hidden_dim(), 64u);
  EXPECT_EQ(est.w2.cols(), 64u);
  for (double b : est.b1) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(est.w1, make_estimator(128, 64, 5).w1);
  EXPECT_NE(est.w1, make_estimator(128, 64, 6).w1);
  SeededRng rng(76);
  const std::vector<Matrix> wrong{Matrix(3, 127), Matrix(3, 127)};
  EXPECT_EQ(error_kind_of([&] { raw_scores(est, wrong); }), ErrorKind::kDimensionError);
}

TEST(Estimator, SharedAcrossViews) {
  SeededRng rng(77);
  const WeightEstimator est = make_estimator(6, 8, 2);
  const Matrix x = random_normal_matrix(4, 6, rng);
  const std::vector<Matrix> same{x, x, x};
  const Matrix raw = raw_scores(est, same);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(raw(r, 0), raw(r, 1));
    EXPECT_EQ(raw(r, 1), raw(r, 2));
  }
}

// sum_ik w_ik c_ik with w = normalize(raw_scores).
double allocation_objective(const WeightEstimator& est, std::span<const Matrix> aligned,
                            const Matrix& costs) {
  const Matrix w = normalize_weights(raw_scores(est, aligned));
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w.values()[i] * costs.values()[i];
  return s;
}

TEST(Estimator, BackwardMatchesFiniteDifferences) {
  SeededRng rng(78);
  for (std::size_t kv : {2u, 3u, 5u}) {
    WeightEstimator est = make_estimator(7, 9, rng.next_u64());
    for (double& b : est.b1) b = rng.uniform(-0.1, 0.1);
    est.b2[0] = rng.uniform(-0.5, 0.5);
    const std::vector<Matrix> aligned = random_aligned(kv, 6, 7, rng);
    const Matrix costs = random_matrix(6, kv, rng, 0.0, 5.0);
    EstimatorGrads g = estimator_backward(est, aligned, costs);
    const auto result = check_gradients(parameter_views(est), gradient_views(g),
                                        [&] { return allocation_objective(est, aligned, costs); });
    EXPECT_LT(result.max_rel_error, 1e-4) << kv << " " << result.worst;
  }
}

TEST(Estimator, EqualCostsGiveZeroGradient) {
  SeededRng rng(79);
  const WeightEstimator est = make_estimator(4, 5, 3);
  const std::vector<Matrix> aligned = random_aligned(3, 5, 4, rng);
  // Weights always sum to one, so a cost shared by every view is constant.
  EstimatorGrads g = estimator_backward(est, aligned, Matrix(5, 3, 2.5));
  for (const TensorRef& t : gradient_views(g)) {
    for (double v : t.data) EXPECT_NEAR(v, 0.0, 1e-15);
  }
}

}  // namespace
}  // namespace mvad
