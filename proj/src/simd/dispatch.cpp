#include <cstdlib>
#include <string_view>

#include "icuplan/simd.hpp"

namespace icu::simd {

const KernelTable& active_kernels() {
  static const KernelTable* chosen = [] {
    const char* force = std::getenv("ICUPLAN_SIMD");
    if (force != nullptr && std::string_view(force) == "scalar") return &scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return t;
    if (const KernelTable* t = neon_kernels()) return t;
    return &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace icu::simd
