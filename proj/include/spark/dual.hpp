#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace spark {

/// Forward-mode dual number carrying N directional derivatives.
///
/// Used to differentiate losses over the six joint angles in a single pass:
/// seed `d[i] = 1` on joint i and every derivative falls out of ordinary
/// arithmetic on the value.
template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  constexpr Dual(double value, std::array<double, N> grad) : v(value), d(grad) {}

  static constexpr Dual variable(double value, std::size_t index) {
    Dual out(value);
    out.d[index] = 1.0;
    return out;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] * o.v - v * o.d[i]) * inv * inv;
    v *= inv;
    return *this;
  }
};

template <std::size_t N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N>
Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N>
Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <std::size_t N>
Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <std::size_t N>
Dual<N> operator+(double a, Dual<N> b) { b.v += a; return b; }
template <std::size_t N>
Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <std::size_t N>
Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <std::size_t N>
Dual<N> operator*(Dual<N> a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
template <std::size_t N>
Dual<N> operator*(double a, Dual<N> b) { return b * a; }
template <std::size_t N>
Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <std::size_t N>
Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <std::size_t N>
Dual<N> operator-(Dual<N> a) {
  a.v = -a.v;
  for (auto& x : a.d) x = -x;
  return a;
}

template <std::size_t N>
Dual<N> sin(const Dual<N>& a) {
  Dual<N> out(std::sin(a.v));
  const double c = std::cos(a.v);
  for (std::size_t i = 0; i < N; ++i) out.d[i] = c * a.d[i];
  return out;
}

template <std::size_t N>
Dual<N> cos(const Dual<N>& a) {
  Dual<N> out(std::cos(a.v));
  const double s = -std::sin(a.v);
  for (std::size_t i = 0; i < N; ++i) out.d[i] = s * a.d[i];
  return out;
}

template <std::size_t N>
Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> out(std::sqrt(a.v));
  const double k = 0.5 / out.v;
  for (std::size_t i = 0; i < N; ++i) out.d[i] = k * a.d[i];
  return out;
}

/// Value part of a plain or dual scalar.
inline double value_of(double x) { return x; }
template <std::size_t N>
double value_of(const Dual<N>& x) { return x.v; }

}  // namespace spark
