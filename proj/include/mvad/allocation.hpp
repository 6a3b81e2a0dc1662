#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvad/backbone.hpp"
#include "mvad/linalg.hpp"
#include "mvad/pca.hpp"

namespace mvad {

inline constexpr std::size_t kDefaultAlignDim = 128;
inline constexpr std::size_t kEstimatorHidden = 64;

// d = min(cap, min_k d_k, n_train - 1).
std::size_t alignment_dim(std::span<const std::size_t> view_dims, std::size_t n_train,
                          std::size_t cap = kDefaultAlignDim);

// Shared raw-score network d -> hidden (relu) -> 1 (identity).
struct WeightEstimator {
  Matrix w1;                // hidden x d
  std::vector<double> b1;   // hidden
  Matrix w2;                // 1 x hidden
  std::vector<double> b2;   // 1

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
};

WeightEstimator make_estimator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);
WeightEstimator zero_estimator(std::size_t input_dim, std::size_t hidden);

struct AllocationState {
  std::vector<PcaModel> aligners;  // one per view, common output dim
  WeightEstimator estimator;
  // While false the estimator is bypassed and every weight is exactly 1/K.
  bool estimator_active = false;

  std::size_t num_views() const { return aligners.size(); }
  std::size_t aligned_dim() const {
    return aligners.empty() ? 0 : aligners.front().output_dim();
  }
};

std::vector<PcaModel> fit_aligners(std::span<const Matrix> train_views, std::size_t d);

// Per-view projection with the training-fitted aligners.
std::vector<Matrix> align(const AllocationState& state, std::span<const Matrix> views);

// N x K raw scores w' from the shared estimator.
Matrix raw_scores(const WeightEstimator& est, std::span<const Matrix> aligned);

// Row-wise sigmoid(w') / sum_j sigmoid(w'_j).
Matrix normalize_weights(const Matrix& raw);
Matrix uniform_weights(std::size_t n, std::size_t k);

// N x K allocation weights; uniform when the estimator is inactive.
Matrix estimate_weights(const AllocationState& state, std::span<const Matrix> aligned);

// (w_j + w_k) / 2
double pair_weight(std::span<const double> w_row, std::size_t j, std::size_t k);

// Per-view argmax counts; ties go to the lowest view index.
std::vector<std::size_t> top_view_histogram(const Matrix& weights);

struct EstimatorGrads {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;
};

// Backpropagates dLoss/dWeights (N x K, weights after normalisation) through
// the normalisation, the sigmoid and the shared estimator.
EstimatorGrads estimator_backward(const WeightEstimator& est, std::span<const Matrix> aligned,
                                  const Matrix& grad_weights);

std::vector<TensorRef> parameter_views(WeightEstimator& est);
std::vector<TensorRef> gradient_views(EstimatorGrads& grads);

}  // namespace mvad
