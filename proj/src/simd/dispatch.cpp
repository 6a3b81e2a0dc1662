#include <atomic>
#include <cstdlib>
#include <string>

#include "mvad/simd/kernels.hpp"

namespace mvad::simd {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool cpu_has_avx512() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_initial() {
  const char* env = std::getenv("MVAD_SIMD");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &detail::scalar_table();
    if (want == "avx2" && backend_supported(Backend::kAvx2)) return &table(Backend::kAvx2);
    if (want == "avx512" && backend_supported(Backend::kAvx512)) {
      return &table(Backend::kAvx512);
    }
    if (want == "neon" && backend_supported(Backend::kNeon)) return &table(Backend::kNeon);
  }
  if (backend_supported(Backend::kNeon)) return &table(Backend::kNeon);
  if (backend_supported(Backend::kAvx512)) return &table(Backend::kAvx512);
  if (backend_supported(Backend::kAvx2)) return &table(Backend::kAvx2);
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{select_initial()};
  return slot;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
    case Backend::kAvx512:
      return detail::avx512_table() != nullptr && cpu_has_avx512();
    case Backend::kNeon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

const KernelTable& table(Backend backend) {
  switch (backend) {
    case Backend::kAvx2:
      if (backend_supported(backend)) return *detail::avx2_table();
      break;
    case Backend::kAvx512:
      if (backend_supported(backend)) return *detail::avx512_table();
      break;
    case Backend::kNeon:
      if (backend_supported(backend)) return *detail::neon_table();
      break;
    case Backend::kScalar:
      break;
  }
  return detail::scalar_table();
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active_backend(Backend backend) {
  active_slot().store(&table(backend), std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kAvx512:
      return "avx512";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

}  // namespace mvad::simd
