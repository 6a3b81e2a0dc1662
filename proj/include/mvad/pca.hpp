#pragma once

#include <cstddef>
#include <vector>

#include "mvad/linalg.hpp"

namespace mvad {

struct PcaModel {
  std::vector<double> mean;                 // length d_in
  Matrix components;                        // d_in x d_out, orthonormal columns
  std::vector<double> explained_variance;   // length d_out, non-increasing

  std::size_t input_dim() const { return components.rows(); }
  std::size_t output_dim() const { return components.cols(); }
};

enum class PcaRoute {
  kAuto,              // covariance eigendecomposition up to kPcaEigenMaxDim, else SVD
  kCovarianceEigen,
  kSvd,
};

inline constexpr std::size_t kPcaEigenMaxDim = 1024;

// Eigen-pairs of a symmetric matrix, sorted by descending eigenvalue;
// eigenvectors are the columns of `vectors`.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};

// Householder tridiagonalisation followed by implicit QL iterations.
SymmetricEigen symmetric_eigen(const Matrix& a);

// Fits a PCA on the rows of x. The sample covariance uses divisor N-1 and
// every component is flipped so its largest-magnitude entry is non-negative
// (ties resolved toward the lower index).
PcaModel pca_fit(const Matrix& x, std::size_t d_out, PcaRoute route = PcaRoute::kAuto);

// (x - mean) * components
Matrix pca_transform(const PcaModel& model, const Matrix& x);

// y * components^T + mean
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& y);

}  // namespace mvad
