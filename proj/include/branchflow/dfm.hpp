#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "branchflow/hazard.hpp"
#include "branchflow/rng.hpp"

namespace branchflow {

/**
 * Discrete flow matching interpolant mixing the endpoint, uniform noise, and
 * the current state:
 *
 *   kappa1 = F1(t),  kappa2 = omega_u (1 - F1(t)) F2(t),  kappa3 = 1 - k1 - k2.
 *
 * The alphabet has `alphabet_size` ids and includes the mask id; the uniform
 * noise term p_u weights all ids equally.
 */
struct DFMSpec {
  HazardSpec f1;
  HazardSpec f2;
  double omega_u = 0.2;
  int alphabet_size = 0;  // 0 disables the discrete component
  int mask_token = 0;

  void validate() const {
    if (alphabet_size == 0) return;
    if (alphabet_size < 1) throw std::invalid_argument("DFMSpec: alphabet_size must be >= 1");
    if (!(omega_u >= 0.0 && omega_u < 1.0))
      throw std::invalid_argument("DFMSpec: omega_u must lie in [0, 1)");
    if (mask_token < 0 || mask_token >= alphabet_size)
      throw std::invalid_argument("DFMSpec: mask_token outside the alphabet");
  }
};

struct Schedulers {
  double k1 = 0.0, k2 = 0.0, k3 = 1.0;
};

inline Schedulers dfm_schedulers(const DFMSpec& spec, double t) {
  const double f1 = hazard_cdf(spec.f1, t);
  const double k1 = f1;
  const double k2 = spec.omega_u * (1.0 - f1) * hazard_cdf(spec.f2, t);
  return {k1, k2, 1.0 - k1 - k2};
}

struct IntervalWeights {
  double to_endpoint = 0.0;  // alpha1, mass on delta_{x1}
  double to_uniform = 0.0;   // alpha2, mass on p_u
  double stay = 0.0;         // alpha3, mass on delta_{x_t0}
};

/// Transition weights of the interpolant restarted at (t0, x_t0).
inline IntervalWeights dfm_interval_weights(const DFMSpec& spec, double t0, double t) {
  if (!(t0 <= t)) throw std::domain_error("dfm_interval_weights: t0 > t");
  const Schedulers k0 = dfm_schedulers(spec, t0);
  if (!(k0.k3 > 0.0))
    throw std::domain_error("dfm_interval_weights: degenerate start, kappa3(t0) = 0");
  const Schedulers kt = dfm_schedulers(spec, t);
  IntervalWeights w;
  w.stay = kt.k3 / k0.k3;
  w.to_endpoint = kt.k1 - k0.k1 * w.stay;
  w.to_uniform = kt.k2 - k0.k2 * w.stay;
  // nonnegative by construction; shave float dust
  if (w.to_endpoint < 0.0) w.to_endpoint = 0.0;
  if (w.to_uniform < 0.0) w.to_uniform = 0.0;
  if (w.stay < 0.0) w.stay = 0.0;
  return w;
}

/// Draw the token at time t given the token at t0 and the endpoint token x1.
inline int dfm_interval_sample(const DFMSpec& spec, int x_t0, int x1, double t0, double t,
                               Rng& rng) {
  const IntervalWeights w = dfm_interval_weights(spec, t0, t);
  const double total = w.to_endpoint + w.to_uniform + w.stay;
  double u = rng.uniform() * total;
  if (u < w.to_endpoint) return x1;
  u -= w.to_endpoint;
  if (u < w.to_uniform) return rng.uniform_int(spec.alphabet_size);
  return x_t0;
}

struct DFMRates {
  double endpoint = 0.0;  // coefficient on the x1 distribution
  double uniform = 0.0;   // coefficient on p_u (per-id rate is uniform / K)
};

/// Off-diagonal generating-rate coefficients at time t (both nonnegative).
inline DFMRates dfm_rates(const DFMSpec& spec, double t) {
  const Schedulers k = dfm_schedulers(spec, t);
  if (!(k.k3 > 0.0)) throw std::domain_error("dfm_rates: kappa3(t) = 0");
  const double f1 = hazard_pdf(spec.f1, t);
  const double f2 = hazard_pdf(spec.f2, t);
  const double k1dot = f1;
  const double k2dot =
      spec.omega_u * (-f1 * hazard_cdf(spec.f2, t) + (1.0 - hazard_cdf(spec.f1, t)) * f2);
  const double k3dot = -k1dot - k2dot;
  double a = k1dot - k.k1 * k3dot / k.k3;
  double b = k2dot - k.k2 * k3dot / k.k3;
  if (a < -1e-9 || b < -1e-9)
    throw std::logic_error("dfm_rates: negative rate; schedulers inconsistent");
  if (a < 0.0) a = 0.0;
  if (b < 0.0) b = 0.0;
  return {a, b};
}

/**
 * One Euler step of the token CTMC. `x1_distribution` is a probability vector
 * over the alphabet (typically softmax of the model's endpoint logits). The
 * switch probability is capped at 1, so the step stays well defined as the
 * rates blow up near t = 1.
 */
inline int dfm_step(const DFMSpec& spec, int x_t, const std::vector<double>& x1_distribution,
                    double t, double dt, Rng& rng) {
  if (static_cast<int>(x1_distribution.size()) != spec.alphabet_size)
    throw std::invalid_argument("dfm_step: x1_distribution size mismatch");
  if (dt == 0.0) return x_t;
  const DFMRates r = dfm_rates(spec, t);
  const int k = spec.alphabet_size;
  const double per_id_noise = r.uniform / k;
  const double total_off =
      r.endpoint * (1.0 - x1_distribution[x_t]) + per_id_noise * (k - 1);
  const double p_switch = std::min(1.0, dt * total_off);
  if (!rng.bernoulli(p_switch)) return x_t;
  std::vector<double> w(k);
  for (int y = 0; y < k; ++y)
    w[y] = (y == x_t) ? 0.0 : r.endpoint * x1_distribution[y] + per_id_noise;
  return static_cast<int>(rng.categorical(w));
}

}  // namespace branchflow
