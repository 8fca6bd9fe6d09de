#pragma once

#include <cmath>
#include <stdexcept>

#include "branchflow/rng.hpp"

namespace branchflow {

/// Event times are clamped so they never reach 1.0 exactly; quantile rounding
/// could otherwise push them marginally past the support.
inline constexpr double kTimeEps = 1e-12;

enum class HazardKind { Uniform, Beta };

/**
 * A distribution on [0,1] used as an event-time law. Its hazard rate
 * h(t) = f(t) / (1 - F(t)) diverges as t -> 1, which is what forces every
 * conditioned split/deletion to fire before the end of the bridge.
 *
 * Supported families: U(0,1) and Beta(alpha, beta).
 */
struct HazardSpec {
  HazardKind kind = HazardKind::Uniform;
  double alpha = 1.0;
  double beta = 1.0;

  static HazardSpec uniform() { return HazardSpec{}; }

  static HazardSpec make_beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
      throw std::invalid_argument("beta hazard: parameters must be positive");
    return HazardSpec{HazardKind::Beta, a, b};
  }
};

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 3e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace detail

inline double hazard_pdf(const HazardSpec& spec, double t) {
  if (t < 0.0 || t > 1.0) return 0.0;
  if (spec.kind == HazardKind::Uniform) return 1.0;
  const double a = spec.alpha, b = spec.beta;
  double lp = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  if (a != 1.0) lp += (a - 1.0) * std::log(t);
  if (b != 1.0) lp += (b - 1.0) * std::log1p(-t);
  return std::exp(lp);
}

inline double hazard_cdf(const HazardSpec& spec, double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  if (spec.kind == HazardKind::Uniform) return t;
  return detail::reg_inc_beta(spec.alpha, spec.beta, t);
}

/// 1 - CDF(t), computed with full relative precision near t = 1.
inline double survival(const HazardSpec& spec, double t) {
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  if (spec.kind == HazardKind::Uniform) return 1.0 - t;
  return detail::reg_inc_beta(spec.beta, spec.alpha, 1.0 - t);
}

/// Inverse CDF on [0,1]; bisection-safeguarded Newton on the beta family.
inline double hazard_quantile(const HazardSpec& spec, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  if (spec.kind == HazardKind::Uniform) return p;
  double lo = 0.0, hi = 1.0;
  double x = spec.alpha / (spec.alpha + spec.beta);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = hazard_cdf(spec, x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double d = hazard_pdf(spec, x);
    double xn = (d > 0.0 && std::isfinite(d)) ? x - f / d : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::fabs(xn - x) < 1e-16) return xn;
    x = xn;
  }
  return x;
}

/// h(t) = f(t) / (1 - F(t)); diverges at 1, hence the domain restriction.
inline double hazard_rate(const HazardSpec& spec, double t) {
  if (!(t >= 0.0 && t < 1.0))
    throw std::domain_error("hazard_rate: t must lie in [0, 1)");
  if (spec.kind == HazardKind::Uniform) return 1.0 / (1.0 - t);
  return hazard_pdf(spec, t) / survival(spec, t);
}

/**
 * Waiting time until the next of R remaining events, given none has fired by
 * time t. Inverts the order-statistic law of the minimum of R i.i.d. draws
 * from H conditioned to exceed t:
 *
 *   W = F_H^{-1}(1 - S_H(t) (1-u)^{1/R}) - t.
 *
 * The returned wait satisfies t + wait <= 1 - kTimeEps.
 */
inline double sample_interarrival(const HazardSpec& spec, double t, int remaining, double u) {
  if (!(t >= 0.0 && t < 1.0))
    throw std::domain_error("sample_interarrival: t must lie in [0, 1)");
  if (remaining < 1)
    throw std::invalid_argument("sample_interarrival: no events remain");
  if (!(u >= 0.0 && u < 1.0))
    throw std::invalid_argument("sample_interarrival: u must lie in [0, 1)");
  const double target = 1.0 - survival(spec, t) * std::pow(1.0 - u, 1.0 / remaining);
  double wait = hazard_quantile(spec, target) - t;
  const double max_wait = 1.0 - kTimeEps - t;
  if (wait > max_wait) wait = max_wait;
  if (wait < 0.0) wait = 0.0;
  return wait;
}

inline double sample_interarrival(const HazardSpec& spec, double t, int remaining, Rng& rng) {
  return sample_interarrival(spec, t, remaining, rng.uniform());
}

}  // namespace branchflow
