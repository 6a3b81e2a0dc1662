#include "mvad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mvad/errors.hpp"

namespace mvad {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorKind::kDimensionError,
          "matrix data length " + std::to_string(data_.size()) + " != " +
              std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == m.cols(), ErrorKind::kDimensionError, "ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows_, ErrorKind::kDimensionError, "row index out of range");
    const auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  }
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void gemm(simd::Trans trans_a, simd::Trans trans_b, double alpha, const Matrix& a,
          const Matrix& b, double beta, Matrix& c) {
  const std::size_t m = trans_a == simd::Trans::kNo ? a.rows() : a.cols();
  const std::size_t k = trans_a == simd::Trans::kNo ? a.cols() : a.rows();
  const std::size_t kb = trans_b == simd::Trans::kNo ? b.rows() : b.cols();
  const std::size_t n = trans_b == simd::Trans::kNo ? b.cols() : b.rows();
  if (k != kb) {
    fail(ErrorKind::kDimensionError,
         "gemm inner dimensions " + std::to_string(k) + " vs " + std::to_string(kb));
  }
  require(c.rows() == m && c.cols() == n, ErrorKind::kDimensionError,
          "gemm output shape mismatch");
  simd::GemmArgs args;
  args.trans_a = trans_a;
  args.trans_b = trans_b;
  args.m = m;
  args.n = n;
  args.k = k;
  args.alpha = alpha;
  args.a = a.data();
  args.lda = a.cols();
  args.b = b.data();
  args.ldb = b.cols();
  args.beta = beta;
  args.c = c.data();
  args.ldc = c.cols();
  simd::active().gemm(args);
}

Matrix matmul(const Matrix& a, const Matrix& b, simd::Trans trans_a, simd::Trans trans_b) {
  const std::size_t m = trans_a == simd::Trans::kNo ? a.rows() : a.cols();
  const std::size_t n = trans_b == simd::Trans::kNo ? b.cols() : b.rows();
  Matrix c(m, n);
  gemm(trans_a, trans_b, 1.0, a, b, 0.0, c);
  return c;
}

std::vector<double> column_means(const Matrix& x) {
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += row[c];
  }
  if (x.rows() > 0) {
    for (double& m : mean) m /= static_cast<double>(x.rows());
  }
  return mean;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kDimensionError, "dot length mismatch");
  return simd::active().dot(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  require(na >= 1e-12 && nb >= 1e-12, ErrorKind::kZeroVector,
          "cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double logsumexp(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::kEmptyInput, "logsumexp of an empty sequence");
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace mvad
