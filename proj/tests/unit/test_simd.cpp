#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "icuplan/simd.hpp"

using icu::simd::KernelTable;

namespace {

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (auto* t = icu::simd::avx2_kernels()) out.push_back(t);
  if (auto* t = icu::simd::neon_kernels()) out.push_back(t);
  return out;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("active table is one of the known variants") {
  const auto name = icu::simd::active_kernels().name;
  CHECK((name == "scalar" || name == "avx2" || name == "neon"));
  MESSAGE("active kernels: " << name);
}

TEST_CASE("squared-distance and rbf rows match the scalar reference bit for bit") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  const auto& ref = icu::simd::scalar_kernels();
  for (const KernelTable* t : vector_tables()) {
    for (std::size_t n : {1u, 3u, 4u, 7u, 33u, 128u}) {
      for (std::size_t dim : {1u, 2u, 6u}) {
        std::vector<double> x(dim), pts(n * dim), inv(dim), a(n), b(n), ka(n), kb(n);
        for (auto& v : x) v = nd(rng);
        for (auto& v : pts) v = nd(rng);
        for (auto& v : inv) v = std::exp(nd(rng));
        ref.scaled_sq_dist_row(x.data(), pts.data(), n, dim, inv.data(), a.data());
        t->scaled_sq_dist_row(x.data(), pts.data(), n, dim, inv.data(), b.data());
        CHECK(same_bits(a, b));
        ref.rbf_from_sq_dist(a.data(), n, 1.7, ka.data());
        t->rbf_from_sq_dist(b.data(), n, 1.7, kb.data());
        CHECK(same_bits(ka, kb));
      }
    }
  }
}

TEST_CASE("dot agrees with the scalar reference to rounding") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  const auto& ref = icu::simd::scalar_kernels();
  for (const KernelTable* t : vector_tables()) {
    for (std::size_t n : {0u, 1u, 5u, 8u, 17u, 1000u}) {
      std::vector<double> a(n), b(n);
      double mag = 0;
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = nd(rng);
        b[j] = nd(rng);
        mag += std::abs(a[j] * b[j]);
      }
      CHECK(std::abs(ref.dot(a.data(), b.data(), n) - t->dot(a.data(), b.data(), n)) <= 1e-14 * (mag + 1));
    }
  }
}

TEST_CASE("batched Euler step matches the scalar reference bit for bit") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& ref = icu::simd::scalar_kernels();
  for (const KernelTable* t : vector_tables()) {
    for (std::size_t n : {1u, 4u, 6u, 13u}) {
      std::vector<double> s(n), e(n), i(n), h(n), r(n), al(n), ga(n), et(n), beta(n);
      for (std::size_t j = 0; j < n; ++j) {
        s[j] = 900 + 100 * u(rng);
        e[j] = 10 * u(rng);
        i[j] = 10 * u(rng);
        h[j] = u(rng);
        r[j] = u(rng);
        al[j] = 0.1 + u(rng);
        ga[j] = 0.1 + u(rng);
        et[j] = u(rng);
        beta[j] = 1e-3 * u(rng);
      }
      auto s2 = s, e2 = e, i2 = i, h2 = h, r2 = r;
      icu::simd::SeihrLanes a{s.data(), e.data(), i.data(), h.data(), r.data(), al.data(), ga.data(), et.data(), n};
      icu::simd::SeihrLanes b{s2.data(), e2.data(), i2.data(), h2.data(), r2.data(), al.data(), ga.data(), et.data(), n};
      for (int k = 0; k < 50; ++k) {
        ref.seihr_euler_step(a, beta.data(), 0.25);
        t->seihr_euler_step(b, beta.data(), 0.25);
      }
      CHECK(same_bits(s, s2));
      CHECK(same_bits(e, e2));
      CHECK(same_bits(i, i2));
      CHECK(same_bits(h, h2));
      CHECK(same_bits(r, r2));
    }
  }
}
