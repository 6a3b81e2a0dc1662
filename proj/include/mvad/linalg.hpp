#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mvad/simd/kernels.hpp"

namespace mvad {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = alpha * op(A) op(B) + beta * C through the active SIMD backend. C must
// already have the result shape.
void gemm(simd::Trans trans_a, simd::Trans trans_b, double alpha, const Matrix& a,
          const Matrix& b, double beta, Matrix& c);

// op(A) * op(B) into a fresh matrix.
Matrix matmul(const Matrix& a, const Matrix& b, simd::Trans trans_a = simd::Trans::kNo,
              simd::Trans trans_b = simd::Trans::kNo);

std::vector<double> column_means(const Matrix& x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// a.b / (|a||b|) clamped to [-1, 1]; ZeroVector if either norm is below 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// log(sum(exp(x))) by max-shift; EmptyInput on an empty span.
double logsumexp(std::span<const double> xs);

inline double sigmoid(double x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace mvad
