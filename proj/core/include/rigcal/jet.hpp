#pragma once

// Forward-mode automatic differentiation scalar. A Jet<N> carries a value and
// the gradient of that value with respect to N independent variables; arithmetic
// propagates both through the chain rule. Factor implementations are templated
// on the scalar type so the same code path produces residuals (double) and
// residuals plus exact Jacobians (Jet).

#include <Eigen/Core>

#include <cmath>
#include <ostream>

namespace rigcal {

template <int N>
struct Jet {
  double a = 0.0;
  Eigen::Matrix<double, N, 1> v = Eigen::Matrix<double, N, 1>::Zero();

  Jet() = default;
  // NOLINTNEXTLINE(google-explicit-constructor): scalar promotion is intended.
  Jet(double value) : a(value) {}
  Jet(double value, int index) : a(value) { v[index] = 1.0; }
  Jet(double value, const Eigen::Matrix<double, N, 1>& grad) : a(value), v(grad) {}

  Jet& operator+=(const Jet& o) {
    a += o.a;
    v += o.v;
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    a -= o.a;
    v -= o.v;
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator-(const Jet& x) { return Jet(-x.a, (-x.v).eval()); }

  friend Jet operator+(const Jet& x, const Jet& y) { return Jet(x.a + y.a, x.v + y.v); }
  friend Jet operator+(const Jet& x, double s) { return Jet(x.a + s, x.v); }
  friend Jet operator+(double s, const Jet& x) { return Jet(s + x.a, x.v); }

  friend Jet operator-(const Jet& x, const Jet& y) { return Jet(x.a - y.a, x.v - y.v); }
  friend Jet operator-(const Jet& x, double s) { return Jet(x.a - s, x.v); }
  friend Jet operator-(double s, const Jet& x) { return Jet(s - x.a, (-x.v).eval()); }

  friend Jet operator*(const Jet& x, const Jet& y) {
    return Jet(x.a * y.a, x.a * y.v + y.a * x.v);
  }
  friend Jet operator*(const Jet& x, double s) { return Jet(x.a * s, x.v * s); }
  friend Jet operator*(double s, const Jet& x) { return Jet(s * x.a, s * x.v); }

  friend Jet operator/(const Jet& x, const Jet& y) {
    const double inv = 1.0 / y.a;
    const double val = x.a * inv;
    return Jet(val, inv * (x.v - val * y.v));
  }
  friend Jet operator/(const Jet& x, double s) { return Jet(x.a / s, x.v / s); }
  friend Jet operator/(double s, const Jet& x) {
    const double inv = 1.0 / x.a;
    const double val = s * inv;
    return Jet(val, (-val * inv) * x.v);
  }

  friend bool operator<(const Jet& x, const Jet& y) { return x.a < y.a; }
  friend bool operator>(const Jet& x, const Jet& y) { return x.a > y.a; }
  friend bool operator<=(const Jet& x, const Jet& y) { return x.a <= y.a; }
  friend bool operator>=(const Jet& x, const Jet& y) { return x.a >= y.a; }
  friend bool operator==(const Jet& x, const Jet& y) { return x.a == y.a; }
  friend bool operator!=(const Jet& x, const Jet& y) { return x.a != y.a; }

  friend std::ostream& operator<<(std::ostream& os, const Jet& x) {
    return os << x.a << " [" << x.v.transpose() << "]";
  }
};

template <int N>
Jet<N> abs(const Jet<N>& x) {
  return x.a < 0.0 ? -x : x;
}

template <int N>
Jet<N> sqrt(const Jet<N>& x) {
  const double s = std::sqrt(x.a);
  return Jet<N>(s, (0.5 / s) * x.v);
}

template <int N>
Jet<N> sin(const Jet<N>& x) {
  return Jet<N>(std::sin(x.a), std::cos(x.a) * x.v);
}

template <int N>
Jet<N> cos(const Jet<N>& x) {
  return Jet<N>(std::cos(x.a), -std::sin(x.a) * x.v);
}

template <int N>
Jet<N> tan(const Jet<N>& x) {
  const double t = std::tan(x.a);
  return Jet<N>(t, (1.0 + t * t) * x.v);
}

template <int N>
Jet<N> asin(const Jet<N>& x) {
  return Jet<N>(std::asin(x.a), (1.0 / std::sqrt(1.0 - x.a * x.a)) * x.v);
}

template <int N>
Jet<N> acos(const Jet<N>& x) {
  return Jet<N>(std::acos(x.a), (-1.0 / std::sqrt(1.0 - x.a * x.a)) * x.v);
}

template <int N>
Jet<N> atan(const Jet<N>& x) {
  return Jet<N>(std::atan(x.a), (1.0 / (1.0 + x.a * x.a)) * x.v);
}

template <int N>
Jet<N> atan2(const Jet<N>& y, const Jet<N>& x) {
  const double inv_n2 = 1.0 / (x.a * x.a + y.a * y.a);
  return Jet<N>(std::atan2(y.a, x.a), inv_n2 * (x.a * y.v - y.a * x.v));
}

template <int N>
Jet<N> exp(const Jet<N>& x) {
  const double e = std::exp(x.a);
  return Jet<N>(e, e * x.v);
}

template <int N>
Jet<N> log(const Jet<N>& x) {
  return Jet<N>(std::log(x.a), (1.0 / x.a) * x.v);
}

template <int N>
Jet<N> pow(const Jet<N>& x, double p) {
  return Jet<N>(std::pow(x.a, p), p * std::pow(x.a, p - 1.0) * x.v);
}

template <int N>
Jet<N> hypot(const Jet<N>& x, const Jet<N>& y) {
  return sqrt(x * x + y * y);
}

template <int N>
bool isfinite(const Jet<N>& x) {
  if (!std::isfinite(x.a)) return false;
  for (int i = 0; i < N; ++i) {
    if (!std::isfinite(x.v[i])) return false;
  }
  return true;
}

template <int N>
double value_of(const Jet<N>& x) {
  return x.a;
}
inline double value_of(double x) { return x; }

}  // namespace rigcal

namespace Eigen {

template <int N>
struct NumTraits<rigcal::Jet<N>> : NumTraits<double> {
  using Real = rigcal::Jet<N>;
  using NonInteger = rigcal::Jet<N>;
  using Nested = rigcal::Jet<N>;
  using Literal = double;

  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    ReadCost = 1,
    AddCost = 1 + N,
    MulCost = 3 + 2 * N,
    RequireInitialization = 1,
  };

  static inline Real dummy_precision() { return rigcal::Jet<N>(1e-12); }
  static inline Real epsilon() { return rigcal::Jet<N>(NumTraits<double>::epsilon()); }
  static inline int digits10() { return NumTraits<double>::digits10(); }
};

// Allow mixed Jet/double expressions inside Eigen (e.g. Matrix<Jet> * double).
template <int N, typename BinaryOp>
struct ScalarBinaryOpTraits<rigcal::Jet<N>, double, BinaryOp> {
  using ReturnType = rigcal::Jet<N>;
};
template <int N, typename BinaryOp>
struct ScalarBinaryOpTraits<double, rigcal::Jet<N>, BinaryOp> {
  using ReturnType = rigcal::Jet<N>;
};

}  // namespace Eigen
