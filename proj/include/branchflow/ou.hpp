#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "branchflow/rng.hpp"

namespace branchflow {

enum class VarianceSchedule { Geometric, Linear };

/**
 * Mean-reverting diffusion dX = theta (anchor - X) dt + sqrt(v_t) dW with a
 * time-dependent infinitesimal variance v_t interpolating v0 -> v1. The
 * geometric schedule keeps v_t positive across decades, which is why it is
 * the default.
 */
struct OUSpec {
  double theta = 1.0;
  double v0 = 1.0;
  double v1 = 1.0;
  VarianceSchedule schedule = VarianceSchedule::Geometric;

  void validate() const {
    if (!(theta > 0.0)) throw std::invalid_argument("OUSpec: theta must be > 0");
    if (!(v1 > 0.0)) throw std::invalid_argument("OUSpec: v1 must be > 0");
    if (schedule == VarianceSchedule::Geometric && !(v0 > 0.0))
      throw std::invalid_argument("OUSpec: geometric schedule needs v0 > 0");
    if (schedule == VarianceSchedule::Linear && !(v0 > 0.0))
      throw std::invalid_argument("OUSpec: v0 must be > 0");
  }
};

inline double variance_at(const OUSpec& spec, double t) {
  if (spec.schedule == VarianceSchedule::Geometric)
    return spec.v0 * std::pow(spec.v1 / spec.v0, t);
  return spec.v0 + (spec.v1 - spec.v0) * t;
}

namespace detail {
inline double expm1_over_x(double x) { return x == 0.0 ? 1.0 : std::expm1(x) / x; }
}  // namespace detail

/// Int_s^v exp(-2 theta (v-u)) v_u du, in closed form for both schedules.
inline double ou_transition_variance(const OUSpec& spec, double s, double v) {
  if (v < s) throw std::domain_error("ou_transition_variance: v < s");
  const double c = 2.0 * spec.theta;
  const double dt = v - s;
  if (dt == 0.0) return 0.0;
  if (spec.schedule == VarianceSchedule::Geometric) {
    const double gamma = std::log(spec.v1 / spec.v0);
    const double vs = variance_at(spec, s);
    return vs * std::exp(-c * dt) * dt * detail::expm1_over_x((c + gamma) * dt);
  }
  // linear: v_{v-w} = v_v - b w for w in [0, dt]
  const double b = spec.v1 - spec.v0;
  const double vv = variance_at(spec, v);
  const double e = std::exp(-c * dt);
  return vv * (1.0 - e) / c - b * (1.0 - e * (1.0 + c * dt)) / (c * c);
}

/**
 * Gaussian transition parameters of the *unconditioned* process from (s, x_s):
 * mean = anchor + (x_s - anchor) e^{-theta (v-s)}, shared scalar variance.
 */
inline std::pair<std::vector<double>, double> ou_transition(
    const OUSpec& spec, const std::vector<double>& x_s, const std::vector<double>& anchor,
    double s, double v) {
  if (v < s) throw std::domain_error("ou_transition: v < s");
  if (x_s.size() != anchor.size())
    throw std::invalid_argument("ou_transition: dimension mismatch");
  const double decay = std::exp(-spec.theta * (v - s));
  std::vector<double> mean(x_s.size());
  for (size_t i = 0; i < x_s.size(); ++i)
    mean[i] = anchor[i] + (x_s[i] - anchor[i]) * decay;
  return {std::move(mean), ou_transition_variance(spec, s, v)};
}

struct BridgeMoments {
  double xs_coef = 0.0;   // mean = anchor + xs_coef * (x_s - anchor)
  double variance = 0.0;  // per-coordinate
};

/**
 * Moments of X_v | X_s = x_s, X_1 = anchor under the Doob-conditioned bridge.
 * At v = 1 the law collapses to the anchor exactly.
 */
inline BridgeMoments ou_bridge_moments(const OUSpec& spec, double s, double v) {
  if (v < s) throw std::domain_error("ou_bridge_moments: v < s");
  if (v == s) return {1.0, 0.0};
  if (v >= 1.0) return {0.0, 0.0};
  const double sig_v = ou_transition_variance(spec, s, v);
  const double sig_1 = ou_transition_variance(spec, s, 1.0);
  const double e_v1 = std::exp(-spec.theta * (1.0 - v));
  const double c = e_v1 * sig_v / sig_1;
  // mean = m_v + c (anchor - m_1); both m's share the (x_s - anchor) direction
  const double coef = std::exp(-spec.theta * (v - s)) - c * std::exp(-spec.theta * (1.0 - s));
  double var = sig_v * (1.0 - e_v1 * c);
  if (var < 0.0) var = 0.0;
  return {coef, var};
}

/// Sample X_v given X_s = x_s and X_1 = anchor; exact pinning at v = 1.
inline std::vector<double> ou_bridge_sample(
    const OUSpec& spec, const std::vector<double>& x_s, const std::vector<double>& anchor,
    double s, double v, Rng& rng) {
  if (v < s) throw std::domain_error("ou_bridge_sample: v < s");
  if (x_s.size() != anchor.size())
    throw std::invalid_argument("ou_bridge_sample: dimension mismatch");
  if (v == s) return x_s;
  if (v >= 1.0) return anchor;
  const BridgeMoments m = ou_bridge_moments(spec, s, v);
  const double sd = std::sqrt(m.variance);
  std::vector<double> out(x_s.size());
  for (size_t i = 0; i < x_s.size(); ++i)
    out[i] = anchor[i] + m.xs_coef * (x_s[i] - anchor[i]) + sd * rng.normal();
  return out;
}

}  // namespace branchflow
