#include "icuplan/simd.hpp"

#include <cmath>

namespace icu::simd {
namespace {

void scaled_sq_dist_row(const double* x, const double* points, std::size_t n, std::size_t dim,
                        const double* inv_ls, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double xk = x[k];
    const double w = inv_ls[k];
    const double* col = points + k * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double t = (xk - col[j]) * w;
      out[j] = out[j] + t * t;
    }
  }
}

void rbf_from_sq_dist(const double* sq, std::size_t n, double scale, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = scale * std::exp(-0.5 * sq[j]);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

void seihr_euler_step(const SeihrLanes& L, const double* beta, double dt) {
  for (std::size_t j = 0; j < L.count; ++j) {
    const double s = L.s[j], e = L.e[j], i = L.i[j];
    const double inf = beta[j] * s * i;
    const double to_i = L.alpha[j] * e;
    const double leave = L.gamma[j] * i;
    const double ds = -inf;
    const double de = inf - to_i;
    const double di = to_i - leave;
    const double dh = L.eta[j] * leave;
    const double dr = (1.0 - L.eta[j]) * leave;
    L.s[j] = s + dt * ds;
    L.e[j] = e + dt * de;
    L.i[j] = i + dt * di;
    L.h[j] = L.h[j] + dt * dh;
    L.r[j] = L.r[j] + dt * dr;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", scaled_sq_dist_row, rbf_from_sq_dist, dot, seihr_euler_step};
  return table;
}

}  // namespace icu::simd
