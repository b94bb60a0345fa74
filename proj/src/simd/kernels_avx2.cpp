// Compiled with -mavx2; only reached after a runtime CPU check.
#include "icuplan/simd.hpp"

#if defined(__x86_64__) && defined(__AVX2__)
#include <immintrin.h>

#include <cmath>

namespace icu::simd {
namespace {

void scaled_sq_dist_row(const double* x, const double* points, std::size_t n, std::size_t dim,
                        const double* inv_ls, double* out) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double* col = points + k * n;
    const __m256d xk = _mm256_set1_pd(x[k]);
    const __m256d w = _mm256_set1_pd(inv_ls[k]);
    std::size_t j = 0;
    for (; j < n4; j += 4) {
      const __m256d t = _mm256_mul_pd(_mm256_sub_pd(xk, _mm256_loadu_pd(col + j)), w);
      _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j), _mm256_mul_pd(t, t)));
    }
    for (; j < n; ++j) {
      const double t = (x[k] - col[j]) * inv_ls[k];
      out[j] = out[j] + t * t;
    }
  }
}

// exp has no AVX2 instruction; the scalar libm call keeps results identical.
void rbf_from_sq_dist(const double* sq, std::size_t n, double scale, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = scale * std::exp(-0.5 * sq[j]);
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4)));
  }
  for (; j + 4 <= n; j += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void seihr_euler_step(const SeihrLanes& L, const double* beta, double dt) {
  const std::size_t n4 = L.count & ~std::size_t{3};
  const __m256d vdt = _mm256_set1_pd(dt);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j < n4; j += 4) {
    const __m256d s = _mm256_loadu_pd(L.s + j);
    const __m256d e = _mm256_loadu_pd(L.e + j);
    const __m256d i = _mm256_loadu_pd(L.i + j);
    const __m256d eta = _mm256_loadu_pd(L.eta + j);
    const __m256d inf = _mm256_mul_pd(_mm256_mul_pd(_mm256_loadu_pd(beta + j), s), i);
    const __m256d to_i = _mm256_mul_pd(_mm256_loadu_pd(L.alpha + j), e);
    const __m256d leave = _mm256_mul_pd(_mm256_loadu_pd(L.gamma + j), i);
    const __m256d ds = _mm256_sub_pd(zero, inf);
    const __m256d de = _mm256_sub_pd(inf, to_i);
    const __m256d di = _mm256_sub_pd(to_i, leave);
    const __m256d dh = _mm256_mul_pd(eta, leave);
    const __m256d dr = _mm256_mul_pd(_mm256_sub_pd(one, eta), leave);
    _mm256_storeu_pd(L.s + j, _mm256_add_pd(s, _mm256_mul_pd(vdt, ds)));
    _mm256_storeu_pd(L.e + j, _mm256_add_pd(e, _mm256_mul_pd(vdt, de)));
    _mm256_storeu_pd(L.i + j, _mm256_add_pd(i, _mm256_mul_pd(vdt, di)));
    _mm256_storeu_pd(L.h + j, _mm256_add_pd(_mm256_loadu_pd(L.h + j), _mm256_mul_pd(vdt, dh)));
    _mm256_storeu_pd(L.r + j, _mm256_add_pd(_mm256_loadu_pd(L.r + j), _mm256_mul_pd(vdt, dr)));
  }
  if (j < L.count) {
    SeihrLanes tail{L.s + j, L.e + j, L.i + j, L.h + j, L.r + j, L.alpha + j, L.gamma + j, L.eta + j, L.count - j};
    scalar_kernels().seihr_euler_step(tail, beta + j, dt);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", scaled_sq_dist_row, rbf_from_sq_dist, dot, seihr_euler_step};
  return __builtin_cpu_supports("avx2") ? &table : nullptr;
}

}  // namespace icu::simd

#else

namespace icu::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace icu::simd

#endif
