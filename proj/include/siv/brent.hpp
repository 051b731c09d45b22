#pragma once

#include <cmath>
#include <limits>

namespace siv {

struct BrentResult {
  double x = 0.0;
  double fx = std::numeric_limits<double>::infinity();
  int n_evals = 0;
  bool converged = false;
};

// Bounded scalar minimization on [lo, hi] by golden-section search with
// successive parabolic interpolation (Brent). Deterministic; termination on
// |x - xm| <= 2*tol1 - (hi-lo)/2 with tol1 = sqrt(eps)|x| + xtol/3.
template <class F>
BrentResult brent_min(F&& f, double lo, double hi, double xtol, int max_fun) {
  constexpr double golden = 0.3819660112501051;  // (3 - sqrt(5)) / 2
  const double sqrt_eps = std::sqrt(2.220446049250313e-16);

  double a = lo, b = hi;
  double xf = a + golden * (b - a);
  double nfc = xf, fulc = xf;
  double fx = f(xf);
  double fnfc = fx, ffulc = fx;
  int num = 1;
  double rat = 0.0, e = 0.0;

  double xm = 0.5 * (a + b);
  double tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
  double tol2 = 2.0 * tol1;

  BrentResult res;
  while (std::abs(xf - xm) > (tol2 - 0.5 * (b - a))) {
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      use_golden = false;
      double r = (xf - nfc) * (fx - ffulc);
      double q = (xf - fulc) * (fx - fnfc);
      double p = (xf - fulc) * q - (xf - nfc) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      r = e;
      e = rat;
      if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - xf) && p < q * (b - xf)) {
        rat = p / q;
        const double xtrial = xf + rat;
        if ((xtrial - a) < tol2 || (b - xtrial) < tol2) {
          const double si = (xm - xf >= 0.0) ? 1.0 : -1.0;
          rat = tol1 * si;
        }
      } else {
        use_golden = true;
      }
    }
    if (use_golden) {
      e = (xf >= xm) ? a - xf : b - xf;
      rat = golden * e;
    }

    const double si = (rat >= 0.0) ? 1.0 : -1.0;
    const double x = xf + si * std::max(std::abs(rat), tol1);
    const double fu = f(x);
    ++num;

    if (fu <= fx) {
      if (x >= xf)
        a = xf;
      else
        b = xf;
      fulc = nfc;
      ffulc = fnfc;
      nfc = xf;
      fnfc = fx;
      xf = x;
      fx = fu;
    } else {
      if (x < xf)
        a = x;
      else
        b = x;
      if (fu <= fnfc || nfc == xf) {
        fulc = nfc;
        ffulc = fnfc;
        nfc = x;
        fnfc = fu;
      } else if (fu <= ffulc || fulc == xf || fulc == nfc) {
        fulc = x;
        ffulc = fu;
      }
    }

    xm = 0.5 * (a + b);
    tol1 = sqrt_eps * std::abs(xf) + xtol / 3.0;
    tol2 = 2.0 * tol1;

    if (num >= max_fun) {
      res.x = xf;
      res.fx = fx;
      res.n_evals = num;
      res.converged = false;
      return res;
    }
  }

  res.x = xf;
  res.fx = fx;
  res.n_evals = num;
  res.converged = true;
  return res;
}

}  // namespace siv
