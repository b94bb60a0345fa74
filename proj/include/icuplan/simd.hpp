#pragma once

// Data-parallel inner loops with a scalar reference implementation and
// vector variants chosen at runtime from the host CPU.
//
// Every vector kernel performs the same arithmetic in the same order as its
// scalar reference (the build disables FP contraction), so results are
// bit-identical except for `dot`, whose reduction order differs.

#include <cstddef>
#include <string_view>

namespace icu::simd {

// Structure-of-arrays SEIHR ensemble; one lane per member.
struct SeihrLanes {
  double* s;
  double* e;
  double* i;
  double* h;
  double* r;
  const double* alpha;
  const double* gamma;
  const double* eta;
  std::size_t count;
};

struct KernelTable {
  std::string_view name;

  // out[j] = sum_k ((x[k] - points[k*n + j]) * inv_lengthscale[k])^2
  // for the n points stored dimension-major.
  void (*scaled_sq_dist_row)(const double* x, const double* points, std::size_t n, std::size_t dim,
                             const double* inv_lengthscale, double* out);

  // out[j] = scale * exp(-0.5 * sq_dist[j])
  void (*rbf_from_sq_dist)(const double* sq_dist, std::size_t n, double scale, double* out);

  double (*dot)(const double* a, const double* b, std::size_t n);

  // One explicit Euler step of every lane with per-lane contact rate beta[j].
  void (*seihr_euler_step)(const SeihrLanes& lanes, const double* beta, double dt);
};

const KernelTable& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The best supported table. Setting ICUPLAN_SIMD=scalar in the environment
// forces the reference kernels.
const KernelTable& active_kernels();

}  // namespace icu::simd
