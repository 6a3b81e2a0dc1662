#pragma once

// Dense double-precision kernels with a scalar reference implementation and
// AVX2 / AVX-512 / NEON variants. The variant is chosen once per process from
// CPUID (overridable with MVAD_SIMD=scalar|avx2|avx512|neon) and stays fixed,
// so every run on one machine executes the same instruction sequence.
//
// Accumulation-order contract shared by every backend: each output element of
// gemm is an in-order reduction over k within blocks of kGemmKc, and blocks
// are added into C in order. No element's arithmetic depends on its row or
// column position, so results for one row never change with the batch it is
// computed in.

#include <cstddef>
#include <span>
#include <string_view>

namespace mvad::simd {

enum class Backend { kScalar, kAvx2, kAvx512, kNeon };

enum class Trans { kNo, kYes };

inline constexpr std::size_t kGemmKc = 256;

struct GemmArgs {
  Trans trans_a = Trans::kNo;
  Trans trans_b = Trans::kNo;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 1.0;
  const double* a = nullptr;
  std::size_t lda = 0;
  const double* b = nullptr;
  std::size_t ldb = 0;
  double beta = 0.0;
  double* c = nullptr;
  std::size_t ldc = 0;
};

struct AdamArgs {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // 1 / (1 - beta1^t) and 1 / (1 - beta2^t)
  double bias_correction1 = 1.0;
  double bias_correction2 = 1.0;
};

struct KernelTable {
  Backend backend;
  // C = alpha * op(A) * op(B) + beta * C, all row-major.
  void (*gemm)(const GemmArgs& args);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // sum_i (x_i - y_i)^2
  double (*squared_distance)(const double* x, const double* y, std::size_t n);
  void (*adam_update)(std::size_t n, const AdamArgs& args, const double* grad,
                      double* m, double* v, double* param);
};

bool backend_supported(Backend backend);
const KernelTable& table(Backend backend);
const KernelTable& active();
std::string_view backend_name(Backend backend);

// Pins the process-wide backend; intended for tests and benchmarks.
void set_active_backend(Backend backend);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();
const KernelTable* avx512_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace mvad::simd
