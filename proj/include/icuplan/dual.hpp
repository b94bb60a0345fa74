#pragma once

#include <array>
#include <cmath>

#include "icuplan/numeric.hpp"

namespace icu {

// Forward-mode dual number with a fixed number of tangent directions.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(double value, int slot) {
    Dual x(value);
    x.d[static_cast<std::size_t>(slot)] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int k = 0; k < N; ++k) d[k] += o.d[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int k = 0; k < N; ++k) d[k] -= o.d[k];
    return *this;
  }
  Dual& operator*=(double c) {
    v *= c;
    for (int k = 0; k < N; ++k) d[k] *= c;
    return *this;
  }
};

template <int N>
Dual<N> operator-(Dual<N> a) {
  a *= -1.0;
  return a;
}
template <int N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) {
  return a += b;
}
template <int N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) {
  return a -= b;
}
template <int N>
Dual<N> operator+(Dual<N> a, double b) {
  a.v += b;
  return a;
}
template <int N>
Dual<N> operator+(double b, Dual<N> a) {
  a.v += b;
  return a;
}
template <int N>
Dual<N> operator-(Dual<N> a, double b) {
  a.v -= b;
  return a;
}
template <int N>
Dual<N> operator-(double b, Dual<N> a) {
  a *= -1.0;
  a.v += b;
  return a;
}
template <int N>
Dual<N> operator*(Dual<N> a, double c) {
  return a *= c;
}
template <int N>
Dual<N> operator*(double c, Dual<N> a) {
  return a *= c;
}
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int k = 0; k < N; ++k) r.d[k] = a.d[k] * b.v + a.v * b.d[k];
  return r;
}
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  Dual<N> r(a.v * inv);
  for (int k = 0; k < N; ++k) r.d[k] = (a.d[k] - r.v * b.d[k]) * inv;
  return r;
}

template <int N>
Dual<N> chain(const Dual<N>& x, double value, double slope) {
  Dual<N> r(value);
  for (int k = 0; k < N; ++k) r.d[k] = slope * x.d[k];
  return r;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

template <int N>
Dual<N> softplus(const Dual<N>& x) {
  return chain(x, softplus(x.v), sigmoid(x.v));
}
template <int N>
Dual<N> sigmoid(const Dual<N>& x) {
  const double s = sigmoid(x.v);
  return chain(x, s, s * (1.0 - s));
}
template <int N>
Dual<N> exp(const Dual<N>& x) {
  const double e = std::exp(x.v);
  return chain(x, e, e);
}

}  // namespace icu
