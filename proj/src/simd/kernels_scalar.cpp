// Scalar reference kernels. These define the semantics the vector backends
// are tested against; they favour plain loops over speed.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gemm_blocked.hpp"
#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {
namespace {

void gemm_scalar(const GemmArgs& g) {
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    scale_c(g);
    return;
  }
  std::vector<double> acc(g.n);
  for (std::size_t pc = 0; pc < g.k; pc += kGemmKc) {
    const std::size_t kend = std::min(g.k, pc + kGemmKc);
    for (std::size_t i = 0; i < g.m; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = pc; p < kend; ++p) {
        const double aik = op_a(g, i, p);
        if (g.trans_b == Trans::kNo) {
          const double* brow = g.b + p * g.ldb;
          for (std::size_t j = 0; j < g.n; ++j) acc[j] += aik * brow[j];
        } else {
          for (std::size_t j = 0; j < g.n; ++j) acc[j] += aik * g.b[j * g.ldb + p];
        }
      }
      store_tile(g, acc.data(), g.n, i, 0, 1, g.n, pc == 0);
    }
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double squared_distance_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void adam_update_scalar(std::size_t n, const AdamArgs& args, const double* grad,
                        double* m, double* v, double* param) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = args.beta1 * m[i] + (1.0 - args.beta1) * grad[i];
    v[i] = args.beta2 * v[i] + (1.0 - args.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] * args.bias_correction1;
    const double v_hat = v[i] * args.bias_correction2;
    param[i] -= args.lr * m_hat / (std::sqrt(v_hat) + args.eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Backend::kScalar,     gemm_scalar,
                             dot_scalar,           axpy_scalar,
                             squared_distance_scalar, adam_update_scalar};
  return t;
}

}  // namespace mvad::simd::detail
