#include "mvad/allocation.hpp"

#include <algorithm>
#include <cmath>

#include "mvad/errors.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace {

void check_aligned(const WeightEstimator& est, std::span<const Matrix> aligned) {
  require(!aligned.empty(), ErrorKind::kDimensionError, "no aligned views");
  const std::size_t n = aligned.front().rows();
  for (const Matrix& a : aligned) {
    require(a.rows() == n && a.cols() == est.input_dim(), ErrorKind::kDimensionError,
            "aligned features do not match the estimator input");
  }
}

// hidden = relu(x w1^T + b1)
Matrix hidden_layer(const WeightEstimator& est, const Matrix& x) {
  Matrix h(x.rows(), est.hidden_dim());
  gemm(simd::Trans::kNo, simd::Trans::kYes, 1.0, x, est.w1, 0.0, h);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    auto row = h.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double v = row[c] + est.b1[c];
      row[c] = v > 0.0 ? v : 0.0;
    }
  }
  return h;
}

}  // namespace

std::size_t alignment_dim(std::span<const std::size_t> view_dims, std::size_t n_train,
                          std::size_t cap) {
  require(!view_dims.empty(), ErrorKind::kDimensionError, "no views to align");
  require(n_train >= 2, ErrorKind::kDegenerateInput, "alignment needs at least 2 training rows");
  std::size_t d = std::min(cap, n_train - 1);
  for (std::size_t dk : view_dims) d = std::min(d, dk);
  return d;
}

WeightEstimator make_estimator(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  SeededRng rng(seed);
  WeightEstimator est = zero_estimator(input_dim, hidden);
  const double l1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
  for (double& w : est.w1.values()) w = rng.uniform(-l1, l1);
  const double l2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  for (double& w : est.w2.values()) w = rng.uniform(-l2, l2);
  return est;
}

WeightEstimator zero_estimator(std::size_t input_dim, std::size_t hidden) {
  require(input_dim >= 1 && hidden >= 1, ErrorKind::kConfigError,
          "estimator dimensions must be positive");
  WeightEstimator est;
  est.w1 = Matrix(hidden, input_dim);
  est.b1.assign(hidden, 0.0);
  est.w2 = Matrix(1, hidden);
  est.b2.assign(1, 0.0);
  return est;
}

std::vector<PcaModel> fit_aligners(std::span<const Matrix> train_views, std::size_t d) {
  std::vector<PcaModel> out;
  out.reserve(train_views.size());
  for (const Matrix& v : train_views) out.push_back(pca_fit(v, d));
  return out;
}

std::vector<Matrix> align(const AllocationState& state, std::span<const Matrix> views) {
  require(views.size() == state.num_views(), ErrorKind::kDimensionError,
          "view count does not match the fitted aligners");
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t k = 0; k < views.size(); ++k) out.push_back(pca_transform(state.aligners[k], views[k]));
  return out;
}

Matrix raw_scores(const WeightEstimator& est, std::span<const Matrix> aligned) {
  check_aligned(est, aligned);
  const std::size_t n = aligned.front().rows();
  Matrix out(n, aligned.size());
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    const Matrix h = hidden_layer(est, aligned[k]);
    for (std::size_t r = 0; r < n; ++r) out(r, k) = dot(h.row(r), est.w2.row(0)) + est.b2[0];
  }
  return out;
}

Matrix normalize_weights(const Matrix& raw) {
  Matrix w(raw.rows(), raw.cols());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const auto src = raw.row(r);
    auto dst = w.row(r);
    double total = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = sigmoid(src[k]);
      total += dst[k];
    }
    for (double& v : dst) v /= total;
  }
  return w;
}

Matrix uniform_weights(std::size_t n, std::size_t k) {
  return Matrix(n, k, 1.0 / static_cast<double>(k));
}

Matrix estimate_weights(const AllocationState& state, std::span<const Matrix> aligned) {
  require(aligned.size() == state.num_views(), ErrorKind::kDimensionError,
          "view count does not match the allocation state");
  const std::size_t n = aligned.empty() ? 0 : aligned.front().rows();
  if (!state.estimator_active) return uniform_weights(n, aligned.size());
  return normalize_weights(raw_scores(state.estimator, aligned));
}

double pair_weight(std::span<const double> w_row, std::size_t j, std::size_t k) {
  require(j < w_row.size() && k < w_row.size(), ErrorKind::kDimensionError,
          "view index out of range");
  return (w_row[j] + w_row[k]) / 2.0;
}

std::vector<std::size_t> top_view_histogram(const Matrix& weights) {
  std::vector<std::size_t> counts(weights.cols(), 0);
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    const auto row = weights.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    ++counts[best];
  }
  return counts;
}

EstimatorGrads estimator_backward(const WeightEstimator& est, std::span<const Matrix> aligned,
                                  const Matrix& grad_weights) {
  check_aligned(est, aligned);
  const std::size_t n = aligned.front().rows();
  const std::size_t kv = aligned.size();
  require(grad_weights.rows() == n && grad_weights.cols() == kv, ErrorKind::kDimensionError,
          "weight gradient shape mismatch");

  std::vector<Matrix> hidden;
  hidden.reserve(kv);
  Matrix raw(n, kv);
  for (std::size_t k = 0; k < kv; ++k) {
    hidden.push_back(hidden_layer(est, aligned[k]));
    for (std::size_t r = 0; r < n; ++r) raw(r, k) = dot(hidden[k].row(r), est.w2.row(0)) + est.b2[0];
  }

  // w_k = s_k / S with s = sigmoid(w'):
  // dL/dw'_k = s_k (1 - s_k) / S * (g_k - sum_j g_j w_j).
  Matrix graw(n, kv);
  std::vector<double> s(kv);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < kv; ++k) {
      s[k] = sigmoid(raw(r, k));
      total += s[k];
    }
    double mixed = 0.0;
    for (std::size_t k = 0; k < kv; ++k) mixed += grad_weights(r, k) * (s[k] / total);
    for (std::size_t k = 0; k < kv; ++k) {
      graw(r, k) = s[k] * (1.0 - s[k]) / total * (grad_weights(r, k) - mixed);
    }
  }

  EstimatorGrads g;
  g.w1 = Matrix(est.hidden_dim(), est.input_dim());
  g.b1.assign(est.hidden_dim(), 0.0);
  g.w2 = Matrix(1, est.hidden_dim());
  g.b2.assign(1, 0.0);
  for (std::size_t k = 0; k < kv; ++k) {
    Matrix gh(n, est.hidden_dim());
    for (std::size_t r = 0; r < n; ++r) {
      const double gr = graw(r, k);
      g.b2[0] += gr;
      const auto h = hidden[k].row(r);
      auto w2g = g.w2.row(0);
      auto ghr = gh.row(r);
      for (std::size_t c = 0; c < h.size(); ++c) {
        w2g[c] += gr * h[c];
        ghr[c] = h[c] > 0.0 ? gr * est.w2(0, c) : 0.0;
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto ghr = gh.row(r);
      for (std::size_t c = 0; c < ghr.size(); ++c) g.b1[c] += ghr[c];
    }
    gemm(simd::Trans::kYes, simd::Trans::kNo, 1.0, gh, aligned[k], 1.0, g.w1);
  }
  return g;
}

std::vector<TensorRef> parameter_views(WeightEstimator& est) {
  return {{"estimator", "w1", est.w1.values()},
          {"estimator", "b1", est.b1},
          {"estimator", "w2", est.w2.values()},
          {"estimator", "b2", est.b2}};
}

std::vector<TensorRef> gradient_views(EstimatorGrads& grads) {
  return {{"estimator", "w1", grads.w1.values()},
          {"estimator", "b1", grads.b1},
          {"estimator", "w2", grads.w2.values()},
          {"estimator", "b2", grads.b2}};
}

}  // namespace mvad
