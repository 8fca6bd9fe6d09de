#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include "branchflow/element.hpp"
#include "branchflow/forest.hpp"
#include "branchflow/rng.hpp"

namespace branchflow {

enum class DeletionScheme { Rate, DuplicateEach };

/// Knobs for constructing the conditioning tuple Z from a data sample.
struct LatentSpec {
  double lambda_group = 0.0;    // x0 length is 1 + Poisson(lambda) per group
  double deletion_rate = 1.2;   // d_r for the rate scheme, must be >= 1
  DeletionScheme scheme = DeletionScheme::Rate;
};

/**
 * The conditioning tuple Z = (X1^{+deleted}, X0, forest, anchors). Fully
 * determines the conditional bridge: x1_aug holds the data elements with
 * to-be-deleted copies spliced in, x0 the base state, and the forest one
 * plane tree per designable x0 element whose leaves are x1_aug in order.
 */
struct LatentZ {
  Sequence x1_aug;
  std::vector<bool> deleted;  // parallel to x1_aug; false on fixed elements
  Sequence x0;
  Forest forest;
  std::vector<int> x0_root;  // per x0 element: root node index, or -1 if fixed
  int dim = 0;
  int mask_token = 0;

  Sequence x1() const {
    Sequence out;
    for (size_t i = 0; i < x1_aug.size(); ++i)
      if (!deleted[i]) out.push_back(x1_aug[i]);
    return out;
  }
};

namespace detail {

struct GroupRun {
  int group = 0;
  size_t begin = 0, end = 0;  // [begin, end) within the sequence
};

/// Contiguous designable runs, in order; throws if a group id reappears.
inline std::vector<GroupRun> group_runs(const Sequence& seq) {
  std::vector<GroupRun> runs;
  std::map<int, bool> seen;
  for (size_t i = 0; i < seq.size();) {
    if (seq[i].fixed) {
      ++i;
      continue;
    }
    const int g = seq[i].group;
    if (seen[g]) throw std::invalid_argument("latent: group ids must be contiguous");
    seen[g] = true;
    size_t j = i;
    while (j < seq.size() && !seq[j].fixed && seq[j].group == g) ++j;
    runs.push_back({g, i, j});
    i = j;
  }
  return runs;
}

}  // namespace detail

/**
 * Base state X0: per designable group, 1 + Poisson(lambda) elements with
 * i.i.d. standard-normal coordinates and mask tokens; fixed elements are
 * copied through in place.
 */
inline Sequence sample_x0(const Sequence& x1, double lambda_group, int dim, int mask_token,
                          Rng& rng) {
  if (x1.empty()) throw std::invalid_argument("sample_x0: x1 must be nonempty");
  const auto runs = detail::group_runs(x1);
  Sequence x0;
  size_t pos = 0;
  auto flush_fixed_until = [&](size_t until) {
    for (; pos < until; ++pos)
      if (x1[pos].fixed) x0.push_back(x1[pos]);
  };
  for (const auto& run : runs) {
    flush_fixed_until(run.begin);
    const int len = 1 + rng.poisson(lambda_group);
    for (int k = 0; k < len; ++k) {
      Element e;
      e.continuous.resize(dim);
      for (int c = 0; c < dim; ++c) e.continuous[c] = rng.normal();
      e.token = mask_token;
      e.group = run.group;
      x0.push_back(std::move(e));
    }
    pos = run.end;
  }
  flush_fixed_until(x1.size());
  return x0;
}

/**
 * Splice to-be-deleted copies into x1. Rate scheme: per group,
 * Poisson(max(l0, l1) d_r - l1) uniform-with-replacement template picks, each
 * copy inserted on a fair-coin side of its template and inheriting its state.
 * The draw is floored so the group keeps at least l0 elements (condition 1).
 * DuplicateEach: every element duplicated once; requires l0 = 1 per group.
 */
inline std::pair<Sequence, std::vector<bool>> insert_deletions(
    const Sequence& x1, const std::map<int, int>& x0_len_per_group, double deletion_rate,
    DeletionScheme scheme, Rng& rng) {
  const auto runs = detail::group_runs(x1);
  Sequence out;
  std::vector<bool> deleted;
  size_t pos = 0;
  auto flush_fixed_until = [&](size_t until) {
    for (; pos < until; ++pos)
      if (x1[pos].fixed) {
        out.push_back(x1[pos]);
        deleted.push_back(false);
      }
  };
  for (const auto& run : runs) {
    flush_fixed_until(run.begin);
    const int l1 = static_cast<int>(run.end - run.begin);
    const auto it = x0_len_per_group.find(run.group);
    const int l0 = it == x0_len_per_group.end() ? 1 : it->second;
    std::vector<int> before(l1, 0), after(l1, 0);
    if (scheme == DeletionScheme::DuplicateEach) {
      if (l0 != 1)
        throw std::invalid_argument("insert_deletions: duplicate_each needs l0 = 1 per group");
      for (int j = 0; j < l1; ++j) (rng.bernoulli(0.5) ? before : after)[j] += 1;
    } else {
      const double param = std::max(l0, l1) * deletion_rate - l1;
      if (param < -1e-9)
        throw std::invalid_argument("insert_deletions: deletion_rate must be >= 1");
      int n_del = rng.poisson(std::max(0.0, param));
      if (l1 + n_del < l0) n_del = l0 - l1;  // condition 1 floor
      for (int k = 0; k < n_del; ++k) {
        const int j = rng.uniform_int(l1);
        (rng.bernoulli(0.5) ? before : after)[j] += 1;
      }
    }
    for (int j = 0; j < l1; ++j) {
      const Element& tmpl = x1[run.begin + j];
      for (int k = 0; k < before[j]; ++k) {
        out.push_back(tmpl);
        deleted.push_back(true);
      }
      out.push_back(tmpl);
      deleted.push_back(false);
      for (int k = 0; k < after[j]; ++k) {
        out.push_back(tmpl);
        deleted.push_back(true);
      }
    }
    pos = run.end;
  }
  flush_fixed_until(x1.size());
  return {std::move(out), std::move(deleted)};
}

/// Full Z construction: x0, deletions, forest, anchors.
inline LatentZ make_latent(const Sequence& x1, const LatentSpec& spec, int dim, int mask_token,
                           Rng& rng) {
  LatentZ z;
  z.dim = dim;
  z.mask_token = mask_token;
  z.x0 = sample_x0(x1, spec.lambda_group, dim, mask_token, rng);

  std::map<int, int> x0_len;
  for (const Element& e : z.x0)
    if (!e.fixed) x0_len[e.group] += 1;

  auto [aug, del] = insert_deletions(x1, x0_len, spec.deletion_rate, spec.scheme, rng);
  z.x1_aug = std::move(aug);
  z.deleted = std::move(del);

  z.forest = coalesce_forest(z.x1_aug, z.deleted, x0_len, rng);
  assign_anchors(z.forest, AnchorPolicy::WeightedGeodesic, mask_token);

  // pair roots with designable x0 elements, group by group and in order
  std::map<int, std::vector<int>> roots_by_group;
  for (int r : z.forest.roots) roots_by_group[z.forest.nodes[r].group].push_back(r);
  std::map<int, size_t> used;
  z.x0_root.assign(z.x0.size(), -1);
  for (size_t i = 0; i < z.x0.size(); ++i) {
    if (z.x0[i].fixed) continue;
    const int g = z.x0[i].group;
    z.x0_root[i] = roots_by_group[g][used[g]++];
  }
  return z;
}

// --------------------------------------------------------------------------
// Augmented state and the split / delete operators
// --------------------------------------------------------------------------

struct AugElement {
  Element value;
  BranchId branch;
};

struct AugState {
  double t = 0.0;
  std::vector<AugElement> elements;
};

/// Duplicate element i in place, sending the copies down the two children.
inline AugState split_op(const AugState& state, size_t i) {
  if (i >= state.elements.size()) throw std::out_of_range("split_op: index out of range");
  AugState out = state;
  AugElement first = out.elements[i];
  AugElement second = first;
  first.branch = state.elements[i].branch.child(0);
  second.branch = state.elements[i].branch.child(1);
  out.elements[i] = std::move(first);
  out.elements.insert(out.elements.begin() + i + 1, std::move(second));
  return out;
}

/// Remove element i, preserving the order of the rest.
inline AugState del_op(const AugState& state, size_t i) {
  if (i >= state.elements.size()) throw std::out_of_range("del_op: index out of range");
  AugState out = state;
  out.elements.erase(out.elements.begin() + i);
  return out;
}

}  // namespace branchflow
