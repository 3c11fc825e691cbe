#pragma once

#include <cmath>
#include <complex>

namespace gapq {

/// First-order forward-mode scalar: carries a value and its derivative with
/// respect to one chosen variable. T is double or std::complex<double>.
template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative

  Dual() = default;
  Dual(T value) : v(value), d(T{}) {}  // NOLINT: implicit promotion intended
  Dual(T value, T deriv) : v(value), d(deriv) {}

  /// The independent variable itself (derivative one).
  static Dual variable(T value) { return Dual(value, T{1.0}); }

  Dual operator-() const { return {-v, -d}; }

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
  }

  friend Dual operator+(const Dual& a, double b) { return {a.v + b, a.d}; }
  friend Dual operator+(double a, const Dual& b) { return {a + b.v, b.d}; }
  friend Dual operator-(const Dual& a, double b) { return {a.v - b, a.d}; }
  friend Dual operator-(double a, const Dual& b) { return {a - b.v, -b.d}; }
  friend Dual operator*(const Dual& a, double b) { return {a.v * b, a.d * b}; }
  friend Dual operator*(double a, const Dual& b) { return {a * b.v, a * b.d}; }
  friend Dual operator/(const Dual& a, double b) { return {a.v / b, a.d / b}; }
  friend Dual operator/(double a, const Dual& b) {
    T q = a / b.v;
    return {q, -q * b.d / b.v};
  }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
};

template <class T>
Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.v);
  return {e, e * x.d};
}

// Magnitude of the underlying value, for series-vs-direct branch decisions.
inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(const std::complex<double>& x) { return std::abs(x); }
template <class T>
double magnitude(const Dual<T>& x) {
  return magnitude(x.v);
}

inline double value_of(double x) { return x; }
inline std::complex<double> value_of(const std::complex<double>& x) { return x; }
template <class T>
T value_of(const Dual<T>& x) {
  return x.v;
}

/// (exp(x) - 1) / x, stable near zero.
template <class S>
S expm1_over_x(const S& x) {
  using std::exp;
  if (magnitude(x) < 1e-5) {
    return 1.0 + x * (1.0 / 2.0) + x * x * (1.0 / 6.0) + x * x * x * (1.0 / 24.0);
  }
  return (exp(x) - 1.0) / x;
}

/// Integral of exp(c*w) over [a, b], exact and stable for small |c|.
template <class S>
S exp_integral(const S& c, double a, double b) {
  using std::exp;
  const double len = b - a;
  return exp(c * a) * len * expm1_over_x(c * len);
}

}  // namespace gapq
