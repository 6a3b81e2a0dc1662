// AVX-512F kernels. Compiled with -mavx512f -mfma; only reached after the
// dispatcher has confirmed CPU support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "gemm_blocked.hpp"
#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {
namespace {

constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;

void micro_8x16(std::size_t kc, const double* a, const double* b, double* acc) {
  __m512d c[kMr][2];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kMr; ++r) {
    c[r][0] = _mm512_setzero_pd();
    c[r][1] = _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b);
    const __m512d b1 = _mm512_loadu_pd(b + 8);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m512d ar = _mm512_set1_pd(a[r]);
      c[r][0] = _mm512_fmadd_pd(ar, b0, c[r][0]);
      c[r][1] = _mm512_fmadd_pd(ar, b1, c[r][1]);
    }
    a += kMr;
    b += kNr;
  }
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm512_store_pd(acc + r * kNr, c[r][0]);
    _mm512_store_pd(acc + r * kNr + 8, c[r][1]);
  }
}

void gemm_avx512(const GemmArgs& g) {
  gemm_blocked<kMr, kNr, 128, 512>(g, micro_8x16);
}

double dot_avx512(const double* x, const double* y, std::size_t n) {
  __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i), s0);
    s1 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i + 8), _mm512_loadu_pd(y + i + 8), s1);
  }
  double s = _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void axpy_avx512(std::size_t n, double a, const double* x, double* y) {
  const __m512d va = _mm512_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d prod = _mm512_mul_pd(va, _mm512_loadu_pd(x + i));
    _mm512_storeu_pd(y + i, _mm512_add_pd(_mm512_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double squared_distance_avx512(const double* x, const double* y, std::size_t n) {
  __m512d s0 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d d = _mm512_sub_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i));
    s0 = _mm512_fmadd_pd(d, d, s0);
  }
  double s = _mm512_reduce_add_pd(s0);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s = std::fma(d, d, s);
  }
  return s;
}

void adam_update_avx512(std::size_t n, const AdamArgs& args, const double* grad,
                        double* m, double* v, double* param) {
  const __m512d b1 = _mm512_set1_pd(args.beta1);
  const __m512d ob1 = _mm512_set1_pd(1.0 - args.beta1);
  const __m512d b2 = _mm512_set1_pd(args.beta2);
  const __m512d ob2 = _mm512_set1_pd(1.0 - args.beta2);
  const __m512d bc1 = _mm512_set1_pd(args.bias_correction1);
  const __m512d bc2 = _mm512_set1_pd(args.bias_correction2);
  const __m512d lr = _mm512_set1_pd(args.lr);
  const __m512d eps = _mm512_set1_pd(args.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d g = _mm512_loadu_pd(grad + i);
    const __m512d mi = _mm512_add_pd(_mm512_mul_pd(b1, _mm512_loadu_pd(m + i)),
                                     _mm512_mul_pd(ob1, g));
    const __m512d vi = _mm512_add_pd(_mm512_mul_pd(b2, _mm512_loadu_pd(v + i)),
                                     _mm512_mul_pd(_mm512_mul_pd(ob2, g), g));
    _mm512_storeu_pd(m + i, mi);
    _mm512_storeu_pd(v + i, vi);
    const __m512d m_hat = _mm512_mul_pd(mi, bc1);
    const __m512d v_hat = _mm512_mul_pd(vi, bc2);
    const __m512d step = _mm512_div_pd(_mm512_mul_pd(lr, m_hat),
                                       _mm512_add_pd(_mm512_sqrt_pd(v_hat), eps));
    _mm512_storeu_pd(param + i, _mm512_sub_pd(_mm512_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    m[i] = args.beta1 * m[i] + (1.0 - args.beta1) * grad[i];
    v[i] = args.beta2 * v[i] + (1.0 - args.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] * args.bias_correction1;
    const double v_hat = v[i] * args.bias_correction2;
    param[i] -= args.lr * m_hat / (std::sqrt(v_hat) + args.eps);
  }
}

}  // namespace

const KernelTable* avx512_table() {
  static const KernelTable t{Backend::kAvx512,       gemm_avx512,
                             dot_avx512,             axpy_avx512,
                             squared_distance_avx512, adam_update_avx512};
  return &t;
}

}  // namespace mvad::simd::detail

#else

#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {
const KernelTable* avx512_table() { return nullptr; }
}  // namespace mvad::simd::detail

#endif
