#include "icuplan/simd.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

#include <cmath>

namespace icu::simd {
namespace {

void scaled_sq_dist_row(const double* x, const double* points, std::size_t n, std::size_t dim,
                        const double* inv_ls, double* out) {
  const std::size_t n2 = n & ~std::size_t{1};
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double* col = points + k * n;
    const float64x2_t xk = vdupq_n_f64(x[k]);
    const float64x2_t w = vdupq_n_f64(inv_ls[k]);
    std::size_t j = 0;
    for (; j < n2; j += 2) {
      const float64x2_t t = vmulq_f64(vsubq_f64(xk, vld1q_f64(col + j)), w);
      vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vmulq_f64(t, t)));
    }
    for (; j < n; ++j) {
      const double t = (x[k] - col[j]) * inv_ls[k];
      out[j] = out[j] + t * t;
    }
  }
}

void rbf_from_sq_dist(const double* sq, std::size_t n, double scale, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = scale * std::exp(-0.5 * sq[j]);
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a + j), vld1q_f64(b + j)));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void seihr_euler_step(const SeihrLanes& L, const double* beta, double dt) {
  const std::size_t n2 = L.count & ~std::size_t{1};
  const float64x2_t vdt = vdupq_n_f64(dt);
  const float64x2_t one = vdupq_n_f64(1.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t j = 0;
  for (; j < n2; j += 2) {
    const float64x2_t s = vld1q_f64(L.s + j);
    const float64x2_t e = vld1q_f64(L.e + j);
    const float64x2_t i = vld1q_f64(L.i + j);
    const float64x2_t eta = vld1q_f64(L.eta + j);
    const float64x2_t inf = vmulq_f64(vmulq_f64(vld1q_f64(beta + j), s), i);
    const float64x2_t to_i = vmulq_f64(vld1q_f64(L.alpha + j), e);
    const float64x2_t leave = vmulq_f64(vld1q_f64(L.gamma + j), i);
    vst1q_f64(L.s + j, vaddq_f64(s, vmulq_f64(vdt, vsubq_f64(zero, inf))));
    vst1q_f64(L.e + j, vaddq_f64(e, vmulq_f64(vdt, vsubq_f64(inf, to_i))));
    vst1q_f64(L.i + j, vaddq_f64(i, vmulq_f64(vdt, vsubq_f64(to_i, leave))));
    vst1q_f64(L.h + j, vaddq_f64(vld1q_f64(L.h + j), vmulq_f64(vdt, vmulq_f64(eta, leave))));
    vst1q_f64(L.r + j, vaddq_f64(vld1q_f64(L.r + j), vmulq_f64(vdt, vmulq_f64(vsubq_f64(one, eta), leave))));
  }
  if (j < L.count) {
    SeihrLanes tail{L.s + j, L.e + j, L.i + j, L.h + j, L.r + j, L.alpha + j, L.gamma + j, L.eta + j, L.count - j};
    scalar_kernels().seihr_euler_step(tail, beta + j, dt);
  }
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{"neon", scaled_sq_dist_row, rbf_from_sq_dist, dot, seihr_euler_step};
  return &table;
}

}  // namespace icu::simd

#else

namespace icu::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace icu::simd

#endif
