// AArch64 Advanced SIMD kernels. Every AArch64 core has them, so this
// backend needs no runtime probe.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "gemm_blocked.hpp"
#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;

void micro_4x8(std::size_t kc, const double* a, const double* b, double* acc) {
  float64x2_t c[kMr][4];
  for (auto& row : c) {
    for (auto& v : row) v = vdupq_n_f64(0.0);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const float64x2_t b0 = vld1q_f64(b);
    const float64x2_t b1 = vld1q_f64(b + 2);
    const float64x2_t b2 = vld1q_f64(b + 4);
    const float64x2_t b3 = vld1q_f64(b + 6);
    for (std::size_t r = 0; r < kMr; ++r) {
      const float64x2_t ar = vdupq_n_f64(a[r]);
      c[r][0] = vfmaq_f64(c[r][0], ar, b0);
      c[r][1] = vfmaq_f64(c[r][1], ar, b1);
      c[r][2] = vfmaq_f64(c[r][2], ar, b2);
      c[r][3] = vfmaq_f64(c[r][3], ar, b3);
    }
    a += kMr;
    b += kNr;
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    for (std::size_t q = 0; q < 4; ++q) vst1q_f64(acc + r * kNr + 2 * q, c[r][q]);
  }
}

void gemm_neon(const GemmArgs& g) { gemm_blocked<kMr, kNr, 128, 512>(g, micro_4x8); }

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
    s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

// Unfused, to match the scalar reference exactly.
void axpy_neon(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double squared_distance_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    s0 = vfmaq_f64(s0, d0, d0);
    s1 = vfmaq_f64(s1, d1, d1);
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s = std::fma(d, d, s);
  }
  return s;
}

void adam_update_neon(std::size_t n, const AdamArgs& args, const double* grad, double* m,
                      double* v, double* param) {
  const float64x2_t b1 = vdupq_n_f64(args.beta1);
  const float64x2_t ob1 = vdupq_n_f64(1.0 - args.beta1);
  const float64x2_t b2 = vdupq_n_f64(args.beta2);
  const float64x2_t ob2 = vdupq_n_f64(1.0 - args.beta2);
  const float64x2_t bc1 = vdupq_n_f64(args.bias_correction1);
  const float64x2_t bc2 = vdupq_n_f64(args.bias_correction2);
  const float64x2_t lr = vdupq_n_f64(args.lr);
  const float64x2_t eps = vdupq_n_f64(args.eps);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mi = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(ob1, g));
    const float64x2_t vi =
        vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(vmulq_f64(ob2, g), g));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t m_hat = vmulq_f64(mi, bc1);
    const float64x2_t v_hat = vmulq_f64(vi, bc2);
    const float64x2_t step =
        vdivq_f64(vmulq_f64(lr, m_hat), vaddq_f64(vsqrtq_f64(v_hat), eps));
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
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

const KernelTable* neon_table() {
  static const KernelTable t{Backend::kNeon,        gemm_neon,
                             dot_neon,              axpy_neon,
                             squared_distance_neon, adam_update_neon};
  return &t;
}

}  // namespace mvad::simd::detail

#else

#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace mvad::simd::detail

#endif
