#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "branchflow/dfm.hpp"
#include "branchflow/hazard.hpp"
#include "branchflow/latent.hpp"
#include "branchflow/ou.hpp"

namespace branchflow {

/// Per-element training targets read off the latent forest.
struct ElementTargets {
  int remaining_splits = 0;  // R^Z = w(node) - 1
  int deleted = 0;           // rho^Z, 1 only on deleted-leaf branches
  AnchorState anchor;
  bool fixed = false;
};

using PathTargets = std::vector<ElementTargets>;

struct ConditionalSample {
  AugState state;
  PathTargets targets;
};

struct PathEvent {
  double time = 0.0;
  enum class Kind { Split, Delete } kind = Kind::Split;
};

struct PathRealization {
  std::vector<ConditionalSample> snapshots;  // one per requested time, coupled
  std::vector<PathEvent> events;
};

namespace detail {

inline void evolve_element(Element& value, const AnchorState& anchor, double s, double v,
                           const OUSpec& ou, const DFMSpec& dfm, Rng& rng) {
  if (v == s) return;
  if (!value.continuous.empty())
    value.continuous = ou_bridge_sample(ou, value.continuous, anchor.continuous, s, v, rng);
  if (dfm.alphabet_size > 0)
    value.token = dfm_interval_sample(dfm, value.token, anchor.token, s, v, rng);
}

}  // namespace detail

/**
 * Simulate one realization of the conditional bridge X_t | Z and record the
 * frontier at each requested time (sorted, in [0,1]). Lineages evolve
 * independently along branches: internal nodes draw the next split as the
 * first of w-1 remaining events, deleted leaves draw a single deletion event,
 * surviving leaves just drift to their anchor. Values step from snapshot to
 * snapshot inside a segment, so the recorded states form one coupled path.
 * Snapshots emit elements in planar (in-order) frontier order.
 */
inline PathRealization sample_conditional_path(const LatentZ& z, const std::vector<double>& times,
                                               const HazardSpec& split_hazard,
                                               const HazardSpec& del_hazard, const OUSpec& ou,
                                               const DFMSpec& dfm, Rng& rng) {
  if (!std::is_sorted(times.begin(), times.end()))
    throw std::invalid_argument("sample_conditional_path: times must be sorted");
  for (double t : times)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument("sample_conditional_path: times must lie in [0, 1]");

  PathRealization out;
  out.snapshots.resize(times.size());
  for (size_t k = 0; k < times.size(); ++k) out.snapshots[k].state.t = times[k];
  if (times.empty()) return out;
  const double last_time = times.back();

  struct Frame {
    int node = -1;
    double s = 0.0;
    Element value;
    BranchId branch;
  };

  auto emit = [&](size_t k, const Element& value, const BranchId& branch,
                  const ForestNode* node) {
    out.snapshots[k].state.elements.push_back({value, branch});
    ElementTargets tg;
    if (node) {
      tg.remaining_splits = node->w - 1;
      tg.deleted = node->deleted ? 1 : 0;
      tg.anchor = node->anchor;
    } else {
      tg.anchor = {value.continuous, value.token};
      tg.fixed = true;
    }
    out.snapshots[k].targets.push_back(std::move(tg));
  };

  auto simulate_root = [&](int root, int tree_index, const Element& x0_value) {
    std::vector<Frame> stack;
    stack.push_back({root, 0.0, x0_value, BranchId{tree_index, 0, 0}});
    while (!stack.empty()) {
      Frame fr = std::move(stack.back());
      stack.pop_back();
      for (;;) {
        const ForestNode& node = z.forest.nodes[fr.node];
        double event_time = std::numeric_limits<double>::infinity();
        bool is_split = false;
        if (!node.is_leaf()) {
          event_time = fr.s + sample_interarrival(split_hazard, fr.s, node.w - 1, rng);
          is_split = true;
        } else if (node.deleted) {
          event_time = fr.s + sample_interarrival(del_hazard, fr.s, 1, rng);
        }
        // snapshots strictly before the event; an event at exactly t belongs
        // to the children / the deletion
        size_t k = std::lower_bound(times.begin(), times.end(), fr.s) - times.begin();
        double pos = fr.s;
        for (; k < times.size() && times[k] < event_time; ++k) {
          detail::evolve_element(fr.value, node.anchor, pos, times[k], ou, dfm, rng);
          pos = times[k];
          emit(k, fr.value, fr.branch, &node);
        }
        if (event_time > last_time) break;  // lineage emitted everything it will
        detail::evolve_element(fr.value, node.anchor, pos, event_time, ou, dfm, rng);
        if (!is_split) {
          out.events.push_back({event_time, PathEvent::Kind::Delete});
          break;
        }
        out.events.push_back({event_time, PathEvent::Kind::Split});
        Frame right{node.right, event_time, fr.value, fr.branch.child(1)};
        stack.push_back(std::move(right));
        fr.node = node.left;
        fr.s = event_time;
        fr.branch = fr.branch.child(0);
      }
    }
  };

  // walk the x0 skeleton so fixed elements keep their interleaved positions
  int tree_index = 0;
  for (size_t i = 0; i < z.x0.size(); ++i) {
    if (z.x0[i].fixed) {
      for (size_t k = 0; k < times.size(); ++k) emit(k, z.x0[i], BranchId{}, nullptr);
      continue;
    }
    simulate_root(z.x0_root[i], tree_index, z.x0[i]);
    ++tree_index;
  }
  std::sort(out.events.begin(), out.events.end(),
            [](const PathEvent& a, const PathEvent& b) { return a.time < b.time; });
  return out;
}

/// One draw of (X_t, targets) given Z, as used to assemble training batches.
inline ConditionalSample sample_conditional_state(const LatentZ& z, double t,
                                                  const HazardSpec& split_hazard,
                                                  const HazardSpec& del_hazard, const OUSpec& ou,
                                                  const DFMSpec& dfm, Rng& rng) {
  auto path = sample_conditional_path(z, {t}, split_hazard, del_hazard, ou, dfm, rng);
  return std::move(path.snapshots.front());
}

/// Recover per-element targets from a state by resolving its branch indicators.
inline PathTargets targets_from_state(const LatentZ& z, const AugState& state) {
  PathTargets targets;
  targets.reserve(state.elements.size());
  for (const AugElement& ae : state.elements) {
    ElementTargets tg;
    if (!ae.branch.on_tree()) {
      tg.anchor = {ae.value.continuous, ae.value.token};
      tg.fixed = true;
    } else {
      const ForestNode& node = z.forest.nodes[z.forest.resolve(ae.branch)];
      tg.remaining_splits = node.w - 1;
      tg.deleted = node.deleted ? 1 : 0;
      tg.anchor = node.anchor;
    }
    targets.push_back(std::move(tg));
  }
  return targets;
}

}  // namespace branchflow
