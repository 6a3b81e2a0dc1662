#include "mvad/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/SVD>

#include "mvad/errors.hpp"

namespace mvad {
namespace {

// Reduces the symmetric matrix held in v to tridiagonal form (diagonal d,
// sub-diagonal e) and leaves the accumulated orthogonal transform in v.
void tridiagonalize(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
  const std::size_t n = v.rows();
  for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (std::size_t k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL with Wilkinson-style shifts on the tridiagonal (d, e), rotating
// the columns of v along.
void tridiagonal_ql(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
  const std::size_t n = v.rows();
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::ldexp(1.0, -52);
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1) break;
      ++m;
    }
    if (m == n) m = n - 1;

    if (m > l) {
      int iterations = 0;
      do {
        require(++iterations < 300, ErrorKind::kNumericDivergence,
                "symmetric eigensolver failed to converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          s = e[ii] / r;
          c = p / r;
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          for (std::size_t k = 0; k < n; ++k) {
            h = v(k, ii + 1);
            v(k, ii + 1) = s * v(k, ii) + c * h;
            v(k, ii) = c * v(k, ii) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

void normalize_signs(Matrix& components) {
  for (std::size_t c = 0; c < components.cols(); ++c) {
    std::size_t best = 0;
    double best_abs = -1.0;
    for (std::size_t r = 0; r < components.rows(); ++r) {
      const double a = std::abs(components(r, c));
      if (a > best_abs) {
        best_abs = a;
        best = r;
      }
    }
    if (components(best, c) < 0.0) {
      for (std::size_t r = 0; r < components.rows(); ++r) components(r, c) = -components(r, c);
    }
  }
}

Matrix centered(const Matrix& x, const std::vector<double>& mean) {
  Matrix xc = x;
  for (std::size_t r = 0; r < xc.rows(); ++r) {
    auto row = xc.row(r);
    for (std::size_t c = 0; c < xc.cols(); ++c) row[c] -= mean[c];
  }
  return xc;
}

PcaModel fit_by_eigen(const Matrix& xc, std::vector<double> mean, std::size_t d_out) {
  const double denom = static_cast<double>(xc.rows() - 1);
  Matrix cov(xc.cols(), xc.cols());
  gemm(simd::Trans::kYes, simd::Trans::kNo, 1.0 / denom, xc, xc, 0.0, cov);
  // Symmetrise: gemm rounding may differ between (i,j) and (j,i).
  for (std::size_t i = 0; i < cov.rows(); ++i) {
    for (std::size_t j = i + 1; j < cov.cols(); ++j) {
      const double avg = 0.5 * (cov(i, j) + cov(j, i));
      cov(i, j) = avg;
      cov(j, i) = avg;
    }
  }
  SymmetricEigen eig = symmetric_eigen(cov);

  PcaModel model;
  model.mean = std::move(mean);
  model.components = Matrix(xc.cols(), d_out);
  model.explained_variance.resize(d_out);
  for (std::size_t c = 0; c < d_out; ++c) {
    model.explained_variance[c] = std::max(0.0, eig.values[c]);
    for (std::size_t r = 0; r < xc.cols(); ++r) model.components(r, c) = eig.vectors(r, c);
  }
  return model;
}

PcaModel fit_by_svd(const Matrix& xc, std::vector<double> mean, std::size_t d_out) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> mapped(xc.data(), static_cast<Eigen::Index>(xc.rows()),
                                          static_cast<Eigen::Index>(xc.cols()));
  const Eigen::MatrixXd dense = mapped;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinV);
  const auto& singular = svd.singularValues();
  const auto& v = svd.matrixV();
  const double denom = static_cast<double>(xc.rows() - 1);

  PcaModel model;
  model.mean = std::move(mean);
  model.components = Matrix(xc.cols(), d_out);
  model.explained_variance.resize(d_out);
  for (std::size_t c = 0; c < d_out; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    model.explained_variance[c] = singular(ci) * singular(ci) / denom;
    for (std::size_t r = 0; r < xc.cols(); ++r) {
      model.components(r, c) = v(static_cast<Eigen::Index>(r), ci);
    }
  }
  return model;
}

}  // namespace

SymmetricEigen symmetric_eigen(const Matrix& a) {
  require(a.rows() == a.cols() && a.rows() > 0, ErrorKind::kDimensionError,
          "symmetric_eigen needs a non-empty square matrix");
  const std::size_t n = a.rows();
  Matrix v = a;
  std::vector<double> d(n), e(n);
  if (n == 1) {
    return {{a(0, 0)}, Matrix(1, 1, 1.0)};
  }
  tridiagonalize(v, d, e);
  tridiagonal_ql(v, d, e);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = d[order[c]];
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

PcaModel pca_fit(const Matrix& x, std::size_t d_out, PcaRoute route) {
  require(x.rows() >= 2, ErrorKind::kDegenerateInput, "PCA needs at least 2 samples");
  const std::size_t cap = std::min(x.rows() - 1, x.cols());
  require(d_out >= 1 && d_out <= cap, ErrorKind::kDimensionError,
          "PCA output dimension " + std::to_string(d_out) + " outside [1, " +
              std::to_string(cap) + "]");
  std::vector<double> mean = column_means(x);
  const Matrix xc = centered(x, mean);

  if (route == PcaRoute::kAuto) {
    route = x.cols() <= kPcaEigenMaxDim ? PcaRoute::kCovarianceEigen : PcaRoute::kSvd;
  }
  PcaModel model = route == PcaRoute::kCovarianceEigen ? fit_by_eigen(xc, std::move(mean), d_out)
                                                       : fit_by_svd(xc, std::move(mean), d_out);
  normalize_signs(model.components);
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  require(x.cols() == model.input_dim(), ErrorKind::kDimensionError,
          "PCA input has " + std::to_string(x.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  const Matrix xc = centered(x, model.mean);
  return matmul(xc, model.components);
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& y) {
  require(y.cols() == model.output_dim(), ErrorKind::kDimensionError,
          "PCA inverse input dimension mismatch");
  Matrix x = matmul(y, model.components, simd::Trans::kNo, simd::Trans::kYes);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] += model.mean[c];
  }
  return x;
}

}  // namespace mvad
