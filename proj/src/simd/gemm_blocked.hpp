#pragma once

// Packed, register-blocked GEMM driver shared by the vector backends. The
// backend supplies only the MR x NR micro-kernel; packing, edge handling and
// the C update live here so every backend obeys the same accumulation order.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "mvad/simd/kernels.hpp"

namespace mvad::simd::detail {

inline double op_a(const GemmArgs& g, std::size_t i, std::size_t k) {
  return g.trans_a == Trans::kNo ? g.a[i * g.lda + k] : g.a[k * g.lda + i];
}

inline double op_b(const GemmArgs& g, std::size_t k, std::size_t j) {
  return g.trans_b == Trans::kNo ? g.b[k * g.ldb + j] : g.b[j * g.ldb + k];
}

inline void scale_c(const GemmArgs& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    double* row = g.c + i * g.ldc;
    for (std::size_t j = 0; j < g.n; ++j) {
      row[j] = g.beta == 0.0 ? 0.0 : g.beta * row[j];
    }
  }
}

// Writes one accumulated tile into C. `first_block` selects the beta update;
// later k-blocks are added on top.
inline void store_tile(const GemmArgs& g, const double* acc, std::size_t acc_ld,
                       std::size_t i0, std::size_t j0, std::size_t rows,
                       std::size_t cols, bool first_block) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = g.c + (i0 + r) * g.ldc + j0;
    const double* arow = acc + r * acc_ld;
    if (!first_block) {
      for (std::size_t c = 0; c < cols; ++c) crow[c] += g.alpha * arow[c];
    } else if (g.beta == 0.0) {
      for (std::size_t c = 0; c < cols; ++c) crow[c] = g.alpha * arow[c];
    } else {
      for (std::size_t c = 0; c < cols; ++c) {
        crow[c] = g.beta * crow[c] + g.alpha * arow[c];
      }
    }
  }
}

// MicroKernel: void(std::size_t kc, const double* packed_a,
//                   const double* packed_b, double* acc /* MR x NR */)
template <std::size_t MR, std::size_t NR, std::size_t MC, std::size_t NC,
          typename MicroKernel>
void gemm_blocked(const GemmArgs& g, MicroKernel micro) {
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    scale_c(g);
    return;
  }
  static_assert(MC % MR == 0 && NC % NR == 0);

  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;
  packed_a.resize(MC * kGemmKc);
  packed_b.resize(NC * kGemmKc);
  alignas(64) double acc[MR * NR];

  for (std::size_t jc = 0; jc < g.n; jc += NC) {
    const std::size_t nc = std::min(NC, g.n - jc);
    for (std::size_t pc = 0; pc < g.k; pc += kGemmKc) {
      const std::size_t kc = std::min(kGemmKc, g.k - pc);
      const bool first_block = pc == 0;

      // B panels: kc x NR, zero-padded on the right edge.
      for (std::size_t jr = 0; jr < nc; jr += NR) {
        double* dst = packed_b.data() + jr * kc;
        const std::size_t cols = std::min(NR, nc - jr);
        if (g.trans_b == Trans::kNo) {
          for (std::size_t p = 0; p < kc; ++p) {
            const double* src = g.b + (pc + p) * g.ldb + jc + jr;
            std::size_t c = 0;
            for (; c < cols; ++c) dst[p * NR + c] = src[c];
            for (; c < NR; ++c) dst[p * NR + c] = 0.0;
          }
        } else {
          for (std::size_t c = 0; c < NR; ++c) {
            if (c < cols) {
              const double* src = g.b + (jc + jr + c) * g.ldb + pc;
              for (std::size_t p = 0; p < kc; ++p) dst[p * NR + c] = src[p];
            } else {
              for (std::size_t p = 0; p < kc; ++p) dst[p * NR + c] = 0.0;
            }
          }
        }
      }

      for (std::size_t ic = 0; ic < g.m; ic += MC) {
        const std::size_t mc = std::min(MC, g.m - ic);

        // A panels: kc x MR, zero-padded at the bottom edge.
        for (std::size_t ir = 0; ir < mc; ir += MR) {
          double* dst = packed_a.data() + ir * kc;
          const std::size_t rows = std::min(MR, mc - ir);
          if (g.trans_a == Trans::kNo) {
            for (std::size_t r = 0; r < MR; ++r) {
              if (r < rows) {
                const double* src = g.a + (ic + ir + r) * g.lda + pc;
                for (std::size_t p = 0; p < kc; ++p) dst[p * MR + r] = src[p];
              } else {
                for (std::size_t p = 0; p < kc; ++p) dst[p * MR + r] = 0.0;
              }
            }
          } else {
            for (std::size_t p = 0; p < kc; ++p) {
              const double* src = g.a + (pc + p) * g.lda + ic + ir;
              std::size_t r = 0;
              for (; r < rows; ++r) dst[p * MR + r] = src[r];
              for (; r < MR; ++r) dst[p * MR + r] = 0.0;
            }
          }
        }

        for (std::size_t jr = 0; jr < nc; jr += NR) {
          const std::size_t cols = std::min(NR, nc - jr);
          const double* pb = packed_b.data() + jr * kc;
          for (std::size_t ir = 0; ir < mc; ir += MR) {
            const std::size_t rows = std::min(MR, mc - ir);
            micro(kc, packed_a.data() + ir * kc, pb, acc);
            store_tile(g, acc, NR, ic + ir, jc + jr, rows, cols, first_block);
          }
        }
      }
    }
  }
}

}  // namespace mvad::simd::detail
