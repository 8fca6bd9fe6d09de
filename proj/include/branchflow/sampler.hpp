#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "branchflow/dfm.hpp"
#include "branchflow/hazard.hpp"
#include "branchflow/model.hpp"
#include "branchflow/ou.hpp"

namespace branchflow {

enum class ScheduleKind { Uniform, Cosine };

/// Time grid on [0,1] with n steps (n+1 points); endpoints are exact.
inline std::vector<double> make_schedule(ScheduleKind kind, int n) {
  if (n < 2) throw std::invalid_argument("make_schedule: need at least 2 steps");
  std::vector<double> grid(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double tau = static_cast<double>(k) / n;
    grid[k] = kind == ScheduleKind::Uniform
                  ? tau
                  : 1.0 - (std::cos(kTwoPi / 2.0 * tau) + 1.0) / 2.0;
  }
  grid.front() = 0.0;
  grid.back() = 1.0;
  return grid;
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "uniform") return ScheduleKind::Uniform;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw std::invalid_argument("unknown schedule: " + s);
}

struct StepResult {
  Sequence elements;
  // per input element: 0 = kept, 1 = deleted, 2 = split (kept + copy)
  std::vector<int8_t> fate;
  int splits = 0;
  int deletions = 0;
};

/**
 * One Euler step of the marginal process. First the base step (bridge
 * transition toward the predicted endpoint; DFM step on tokens), then the
 * events: each element deletes with min(1, dt h_del rho) or else splits with
 * min(1, dt h_split R), duplicated in place. Fixed elements never move.
 */
inline StepResult euler_step(const Sequence& state, const Predictions& preds, double t, double dt,
                             const HazardSpec& split_hazard, const HazardSpec& del_hazard,
                             const OUSpec& ou, const DFMSpec& dfm, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be > 0");
  if (t + dt > 1.0 + 1e-12) throw std::invalid_argument("euler_step: t + dt exceeds 1");
  if (preds.size() != state.size())
    throw std::invalid_argument("euler_step: predictions size mismatch");

  const double h_split = hazard_rate(split_hazard, t);
  const double h_del = hazard_rate(del_hazard, t);
  StepResult out;
  out.fate.assign(state.size(), 0);
  out.elements.reserve(state.size() + 4);

  for (size_t i = 0; i < state.size(); ++i) {
    Element e = state[i];
    const PredictionElement& pr = preds[i];
    if (!e.fixed) {
      if (!e.continuous.empty())
        e.continuous = ou_bridge_sample(ou, e.continuous, pr.endpoint_mean, t, t + dt, rng);
      if (dfm.alphabet_size > 0)
        e.token = dfm_step(dfm, e.token, softmax(pr.token_logits), t, dt, rng);
      const double rho = 1.0 / (1.0 + std::exp(-pr.delete_logit));
      const double p_del = std::min(1.0, dt * h_del * rho);
      if (rng.bernoulli(p_del)) {
        out.fate[i] = 1;
        ++out.deletions;
        continue;
      }
      const double r_pred = std::exp(pr.log_splits);
      const double p_split = std::min(1.0, dt * h_split * r_pred);
      if (rng.bernoulli(p_split)) {
        out.fate[i] = 2;
        ++out.splits;
        out.elements.push_back(e);
        out.elements.push_back(std::move(e));
        continue;
      }
    }
    out.elements.push_back(std::move(e));
  }
  return out;
}

/// Initial layout for a sample: fixed conditioning elements interleaved with
/// designable groups of a given starting length.
struct SampleInit {
  struct Item {
    bool fixed = false;
    Element element;  // used when fixed
    int group = 0;    // used when designable
    int length = 1;
  };
  std::vector<Item> items;

  static SampleInit single_group(int length) {
    SampleInit init;
    init.items.push_back({false, {}, 0, length});
    return init;
  }
};

inline Sequence draw_x0_state(const SampleInit& init, int dim, int mask_token, Rng& rng) {
  Sequence x0;
  for (const auto& item : init.items) {
    if (item.fixed) {
      Element e = item.element;
      e.fixed = true;
      x0.push_back(std::move(e));
      continue;
    }
    if (item.length < 1) throw std::invalid_argument("draw_x0_state: group length must be >= 1");
    for (int k = 0; k < item.length; ++k) {
      Element e;
      e.continuous.resize(dim);
      for (int c = 0; c < dim; ++c) e.continuous[c] = rng.normal();
      e.token = mask_token;
      e.group = item.group;
      x0.push_back(std::move(e));
    }
  }
  return x0;
}

struct TrajectoryRow {
  int step = 0;
  double t = 0.0;
  int element_index = 0;
  Element element;
};

struct SampleResult {
  Sequence elements;
  int splits = 0;
  int deletions = 0;
  size_t initial_length = 0;
  std::vector<TrajectoryRow> trajectory;  // filled only when requested
};

namespace detail {

inline AugState as_aug_state(const Sequence& seq, double t) {
  AugState st;
  st.t = t;
  st.elements.reserve(seq.size());
  for (const Element& e : seq) st.elements.push_back({e, BranchId{}});
  return st;
}

inline void record_trajectory(SampleResult& out, int step, double t, const Sequence& seq) {
  for (size_t i = 0; i < seq.size(); ++i)
    out.trajectory.push_back({step, t, static_cast<int>(i), seq[i]});
}

}  // namespace detail

/**
 * Marginal sampling: draw x0, run Euler steps over the grid with a fresh
 * forward pass per step, and snap the final step (continuous to the predicted
 * endpoint, token sampled from the logits). The hazard diverges at t = 1, so
 * the last step carries no events.
 */
inline SampleResult sample(const Model& model, const std::vector<double>& grid,
                           const SampleInit& init, const HazardSpec& split_hazard,
                           const HazardSpec& del_hazard, const OUSpec& ou, const DFMSpec& dfm,
                           Rng& rng, bool want_trajectory = false) {
  if (grid.size() < 3 || grid.front() != 0.0 || grid.back() != 1.0)
    throw std::invalid_argument("sample: grid must run from 0 to 1");
  if (model.cfg.alphabet_size != dfm.alphabet_size)
    throw std::invalid_argument("sample: model/dfm alphabet mismatch");
  SampleResult out;
  Sequence state = draw_x0_state(init, model.cfg.d, dfm.mask_token, rng);
  out.initial_length = state.size();
  if (want_trajectory) detail::record_trajectory(out, 0, 0.0, state);

  const int n_steps = static_cast<int>(grid.size()) - 1;
  for (int k = 0; k < n_steps; ++k) {
    if (state.empty()) break;  // the model deleted everything; a length-0 sample
    const double t = grid[k];
    const Predictions preds = forward(model, t, detail::as_aug_state(state, t));
    if (k + 1 < n_steps) {
      StepResult step = euler_step(state, preds, t, grid[k + 1] - t, split_hazard, del_hazard,
                                   ou, dfm, rng);
      state = std::move(step.elements);
      out.splits += step.splits;
      out.deletions += step.deletions;
    } else {
      // terminal snap: hazards are singular at t = 1
      for (size_t i = 0; i < state.size(); ++i) {
        if (state[i].fixed) continue;
        if (model.cfg.d > 0) state[i].continuous = preds[i].endpoint_mean;
        if (dfm.alphabet_size > 0)
          state[i].token = static_cast<int>(rng.categorical(softmax(preds[i].token_logits)));
      }
    }
    if (want_trajectory) detail::record_trajectory(out, k + 1, grid[k + 1], state);
  }
  out.elements = std::move(state);
  return out;
}

}  // namespace branchflow
