#pragma once

// Numerical quadrature and special functions used by the bath module:
//  - adaptive Gauss-Legendre integration of complex-valued integrands,
//  - complex exponential integral E1 (series + continued fraction),
//  - the closed-form Lorentzian window-tail integral T(t).

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "common.hpp"
#include "errors.hpp"

namespace deom {

namespace detail {

// 15-point Gauss-Legendre rule on [-1,1], nodes by Newton iteration on
// P_15 at first use (machine-precision, no tabulated constants).
struct GaussLegendre15 {
  std::array<double, 15> x{}, w{};
  GaussLegendre15() {
    const int n = 15;
    for (int i = 0; i < n; ++i) {
      double xi = std::cos(PI * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        // evaluate P_n and P_n' by the three-term recurrence
        double p0 = 1.0, p1 = xi;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
        const double dx = p1 / dp;
        xi -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      double p0 = 1.0, p1 = xi;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * xi * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
      x[i] = xi;
      w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
  }
};

inline const GaussLegendre15& gl15() {
  static const GaussLegendre15 rule;
  return rule;
}

template <class F>
cplx gl15_panel(const F& f, double a, double b) {
  const auto& r = gl15();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  cplx s = 0.0;
  for (int i = 0; i < 15; ++i) s += r.w[i] * f(c + h * r.x[i]);
  return h * s;
}

}  // namespace detail

struct QuadResult {
  cplx value{};
  double error_estimate = 0.0;
  std::size_t evals = 0;
};

// Adaptive bisection with a 15-point Gauss panel rule; per-segment error
// from the parent-vs-children difference. `init_panels` pre-splits the
// interval (callers pass an oscillation-resolving count); `max_evals`
// bounds the work on pathological inputs.
template <class F>
QuadResult integrate(const F& f, double a, double b, double abs_tol,
                     int init_panels = 8, std::size_t max_evals = 4'000'000) {
  struct Seg {
    double a, b;
    cplx est;
  };
  std::vector<Seg> stack;
  QuadResult out;
  init_panels = std::max(init_panels, 1);
  const double w0 = (b - a) / init_panels;
  for (int i = init_panels - 1; i >= 0; --i) {
    const double lo = a + i * w0, hi = (i == init_panels - 1) ? b : lo + w0;
    stack.push_back({lo, hi, detail::gl15_panel(f, lo, hi)});
    out.evals += 15;
  }
  const double len = b - a;
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    const double m = 0.5 * (s.a + s.b);
    const cplx left = detail::gl15_panel(f, s.a, m);
    const cplx right = detail::gl15_panel(f, m, s.b);
    out.evals += 30;
    const double err = std::abs(left + right - s.est);
    const double tol_here = abs_tol * std::max((s.b - s.a) / len, 1e-12);
    if (err < tol_here || (s.b - s.a) < 1e-13 * len || out.evals > max_evals) {
      out.value += left + right;
      out.error_estimate += err;
    } else {
      stack.push_back({s.a, m, left});
      stack.push_back({m, s.b, right});
    }
  }
  return out;
}

// Complex exponential integral E1(z) on the principal branch, and the
// overflow-safe product G(z) = e^z E1(z). Series for small |z|, modified
// Lentz continued fraction otherwise.
namespace detail {

inline cplx e1_series(cplx z) {
  const double euler_gamma = 0.57721566490153286;
  cplx sum = 0.0, term = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= -z / double(k);
    const cplx add = -term / double(k);
    sum += add;
    if (std::abs(add) < 1e-18 * (1.0 + std::abs(sum))) break;
  }
  return -euler_gamma - std::log(z) + sum;
}

inline cplx expe1_contfrac(cplx z) {
  // e^z E1(z) = 1/(z+1- 1^2/(z+3- 2^2/(z+5- ...))), modified Lentz
  const double tiny = 1e-300;
  cplx f = z + 1.0, C = f, D = 0.0;
  if (std::abs(f) < tiny) f = tiny;
  for (int k = 1; k < 300; ++k) {
    const cplx ak = -double(k) * double(k);
    const cplx bk = z + 2.0 * k + 1.0;
    D = bk + ak * D;
    if (std::abs(D) < tiny) D = tiny;
    C = bk + ak / C;
    if (std::abs(C) < tiny) C = tiny;
    D = 1.0 / D;
    const cplx delta = C * D;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

}  // namespace detail

inline cplx expe1(cplx z) {
  if (z.real() < 0.0 && std::abs(z.imag()) < 1e-14 * std::abs(z.real()))
    throw SingularityError("E1 evaluated on its branch cut");
  if (std::abs(z) <= 4.0) return std::exp(z) * detail::e1_series(z);
  return detail::expe1_contfrac(z);
}

inline cplx exp_integral_e1(cplx z) {
  if (std::abs(z) <= 4.0) return detail::e1_series(z);
  return std::exp(-z) * detail::expe1_contfrac(z);
}

// Tail of the Lorentzian half-Fourier transform:
//   T(t) = int_{Oc}^inf W^2/(v^2+W^2) e^{-i v t} dv   (t >= 0, Oc > 0).
// Closed form via G(z) = e^z E1(z); the two window tails of a reservoir
// correlation integral both reduce to this.
inline cplx lorentz_tail(double t, double W, double Oc) {
  if (t == 0.0) return W * std::atan(W / Oc);
  const cplx zp = cplx(W * t, Oc * t);
  const cplx zm = cplx(-W * t, Oc * t);
  const cplx phase = std::exp(cplx(0.0, -Oc * t));
  return W / cplx(0.0, 2.0) * phase * (expe1(zp) - expe1(zm));
}

}  // namespace deom
