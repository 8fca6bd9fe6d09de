#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "branchflow/element.hpp"
#include "branchflow/rng.hpp"

namespace branchflow {

/**
 * Desk-scale data generators. token_runs is discrete-only (runs of repeated
 * symbols, geometric run lengths); polyline2d is multimodal (points along a
 * noisy circular arc, token = quadrant of the clean point).
 */
struct ToyDatasetSpec {
  enum class Kind { TokenRuns, Polyline2d } kind = Kind::TokenRuns;
  int symbols = 4;            // data alphabet, mask excluded
  double run_continue = 0.6;  // token_runs: P(next token repeats)
  double noise = 0.05;        // polyline2d: jitter sd

  int dim() const { return kind == Kind::Polyline2d ? 2 : 0; }
  int alphabet_size() const { return symbols + 1; }  // + mask id
  int mask_token() const { return symbols; }
};

/// Length 3 + Poisson(6); runs over `symbols` tokens, geometric run lengths.
inline Sequence gen_token_runs(const ToyDatasetSpec& spec, Rng& rng) {
  const int len = 3 + rng.poisson(6.0);
  Sequence seq(len);
  int tok = rng.uniform_int(spec.symbols);
  for (int i = 0; i < len; ++i) {
    if (i > 0 && !rng.bernoulli(spec.run_continue)) {
      const int step = rng.uniform_int(spec.symbols - 1);
      tok = step >= tok ? step + 1 : step;
    }
    seq[i].token = tok;
  }
  return seq;
}

struct Polyline {
  Sequence elements;
  std::vector<std::array<double, 2>> clean;  // pre-jitter points
};

inline int quadrant_of(double x, double y) {
  if (x >= 0.0) return y >= 0.0 ? 0 : 3;
  return y >= 0.0 ? 1 : 2;
}

/// Length 4 + Poisson(8); points along a random circular arc with Gaussian
/// jitter; tokens are quadrant labels of the clean (pre-jitter) points.
inline Polyline gen_polyline2d_detailed(const ToyDatasetSpec& spec, Rng& rng) {
  const int len = 4 + rng.poisson(8.0);
  const double radius = 0.5 + rng.uniform();
  const double phi0 = kTwoPi * rng.uniform();
  const double span = (kTwoPi / 4.0) * (1.0 + 2.0 * rng.uniform());  // pi/2 .. 3pi/2
  const double dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
  Polyline out;
  out.elements.resize(len);
  out.clean.resize(len);
  for (int i = 0; i < len; ++i) {
    const double phi = phi0 + dir * span * i / (len - 1);
    const double cx = radius * std::cos(phi);
    const double cy = radius * std::sin(phi);
    out.clean[i] = {cx, cy};
    Element& e = out.elements[i];
    e.continuous = {cx + spec.noise * rng.normal(), cy + spec.noise * rng.normal()};
    e.token = quadrant_of(cx, cy);
  }
  return out;
}

inline Sequence gen_polyline2d(const ToyDatasetSpec& spec, Rng& rng) {
  return gen_polyline2d_detailed(spec, rng).elements;
}

inline Sequence gen_sample(const ToyDatasetSpec& spec, Rng& rng) {
  return spec.kind == ToyDatasetSpec::Kind::TokenRuns ? gen_token_runs(spec, rng)
                                                      : gen_polyline2d(spec, rng);
}

}  // namespace branchflow
