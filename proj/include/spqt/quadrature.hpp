#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace spqt {

/// Composite Simpson over uniformly sampled values (spacing h). An odd number
/// of intervals is closed with the 3/8 rule on the last three.
template <class T>
T integrate_uniform(const std::vector<T>& v, double h) {
  const long n = static_cast<long>(v.size()) - 1;  // number of intervals
  if (n < 1) throw std::invalid_argument("integrate_uniform: need at least 2 samples");
  if (n == 1) {
    T acc = v[0];
    acc += v[1];
    acc *= 0.5 * h;
    return acc;
  }
  long n_simpson = n;
  bool tail38 = false;
  if (n % 2 != 0) {
    if (n < 3) throw std::invalid_argument("integrate_uniform: cannot split interval count");
    n_simpson = n - 3;
    tail38 = true;
  }
  T acc = v[0];
  acc *= 0.0;
  if (n_simpson >= 2) {
    T s = v[0];
    s += v[n_simpson];
    for (long i = 1; i < n_simpson; i += 2) {
      T t = v[i];
      t *= 4.0;
      s += t;
    }
    for (long i = 2; i < n_simpson; i += 2) {
      T t = v[i];
      t *= 2.0;
      s += t;
    }
    s *= h / 3.0;
    acc += s;
  }
  if (tail38) {
    T s = v[n - 3];
    s += v[n];
    T t = v[n - 2];
    t += v[n - 1];
    t *= 3.0;
    s += t;
    s *= 3.0 * h / 8.0;
    acc += s;
  }
  return acc;
}

/// Composite Simpson of f over [a, b] with n intervals (n made even).
template <class F>
auto simpson(F&& f, double a, double b, int n) {
  if (n < 2) n = 2;
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  auto acc = f(a);
  acc += f(b);
  for (int i = 1; i < n; i += 2) {
    auto t = f(a + i * h);
    t *= 4.0;
    acc += t;
  }
  for (int i = 2; i < n; i += 2) {
    auto t = f(a + i * h);
    t *= 2.0;
    acc += t;
  }
  acc *= h / 3.0;
  return acc;
}

namespace detail {

template <class F>
double adaptive_simpson_impl(F& f, double a, double b, double fa, double fm, double fb,
                             double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double h = b - a;
  const double left = (h / 12.0) * (fa + 4.0 * flm + fm);
  const double right = (h / 12.0) * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_impl(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_impl(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson for real integrands.
template <class F>
double adaptive_simpson(F f, double a, double b, double tol = 1e-10, int max_depth = 40) {
  if (!(b > a)) return 0.0;
  const double fa = f(a);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_impl(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Adaptive Simpson for complex integrands (real and imaginary parts separately).
template <class F>
std::complex<double> adaptive_simpson_complex(F f, double a, double b, double tol = 1e-10) {
  const double re = adaptive_simpson([&](double x) { return f(x).real(); }, a, b, tol);
  const double im = adaptive_simpson([&](double x) { return f(x).imag(); }, a, b, tol);
  return {re, im};
}

}  // namespace spqt
