#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "branchflow/element.hpp"
#include "branchflow/rng.hpp"

namespace branchflow {

/**
 * Branch indicator: which tree an element lives on, plus the root-to-node
 * child-choice path packed as bits (0 = first child, 1 = second). The empty
 * path denotes the root. tree < 0 marks fixed elements, which sit on no tree.
 */
struct BranchId {
  int tree = -1;
  uint64_t path = 0;
  int depth = 0;

  BranchId child(int which) const {
    if (depth >= 64) throw std::length_error("BranchId: path deeper than 64");
    BranchId b = *this;
    if (which) b.path |= (uint64_t{1} << b.depth);
    ++b.depth;
    return b;
  }

  bool on_tree() const { return tree >= 0; }
  bool operator==(const BranchId&) const = default;
};

struct AnchorState {
  std::vector<double> continuous;
  int token = 0;
};

/**
 * Arena node of a labeled binary plane tree. Leaves carry the x1_aug element
 * they correspond to (leaf_pos) and the deleted flag; w is the subtree leaf
 * count (1 for leaves), so w - 1 is the number of splits still ahead.
 */
struct ForestNode {
  int left = -1;
  int right = -1;
  int w = 1;
  bool deleted = false;
  int group = 0;
  int leaf_pos = -1;
  AnchorState anchor;

  bool is_leaf() const { return left < 0; }
};

struct Forest {
  std::vector<ForestNode> nodes;
  std::vector<int> roots;  // planar order, one per designable x0 element

  /// Walk a branch indicator down from its root; throws on a dangling path.
  int resolve(const BranchId& id) const {
    if (id.tree < 0 || id.tree >= static_cast<int>(roots.size()))
      throw std::out_of_range("Forest::resolve: bad tree index");
    int n = roots[id.tree];
    for (int d = 0; d < id.depth; ++d) {
      const ForestNode& node = nodes[n];
      if (node.is_leaf()) throw std::out_of_range("Forest::resolve: path past a leaf");
      n = ((id.path >> d) & 1) ? node.right : node.left;
    }
    return n;
  }
};

/**
 * Backward coalescence: start from the x1_aug elements as leaves and
 * repeatedly merge a uniformly chosen adjacent same-group pair until each
 * group holds exactly its target number of roots. Fixed elements block
 * adjacency and never merge. Leaf order (planarity) is preserved.
 */
inline Forest coalesce_forest(const Sequence& x1_aug, const std::vector<bool>& deleted,
                              const std::map<int, int>& roots_per_group, Rng& rng) {
  if (deleted.size() != x1_aug.size())
    throw std::invalid_argument("coalesce_forest: deleted flags size mismatch");
  Forest forest;
  struct Slot {
    int node = -1;  // -1 for fixed elements
    int group = 0;
    bool fixed = false;
  };
  std::vector<Slot> frontier;
  std::map<int, int> remaining;
  for (size_t i = 0; i < x1_aug.size(); ++i) {
    const Element& e = x1_aug[i];
    if (e.fixed) {
      frontier.push_back({-1, e.group, true});
      continue;
    }
    ForestNode leaf;
    leaf.deleted = deleted[i];
    leaf.group = e.group;
    leaf.leaf_pos = static_cast<int>(i);
    leaf.anchor = {e.continuous, e.token};
    forest.nodes.push_back(std::move(leaf));
    frontier.push_back({static_cast<int>(forest.nodes.size()) - 1, e.group, false});
    remaining[e.group] += 1;
  }
  for (const auto& [group, target] : roots_per_group) {
    if (remaining[group] < target)
      throw std::invalid_argument("coalesce_forest: fewer leaves than required roots");
  }
  auto target_of = [&](int group) {
    auto it = roots_per_group.find(group);
    if (it == roots_per_group.end())
      throw std::invalid_argument("coalesce_forest: group without a root target");
    return it->second;
  };

  std::vector<int> candidates;
  while (true) {
    candidates.clear();
    for (size_t i = 0; i + 1 < frontier.size(); ++i) {
      const Slot& a = frontier[i];
      const Slot& b = frontier[i + 1];
      if (a.fixed || b.fixed || a.group != b.group) continue;
      if (remaining[a.group] > target_of(a.group)) candidates.push_back(static_cast<int>(i));
    }
    if (candidates.empty()) break;
    const int pick = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
    const Slot& a = frontier[pick];
    const Slot& b = frontier[pick + 1];
    ForestNode parent;
    parent.left = a.node;
    parent.right = b.node;
    parent.w = forest.nodes[a.node].w + forest.nodes[b.node].w;
    parent.group = a.group;
    forest.nodes.push_back(std::move(parent));
    frontier[pick] = {static_cast<int>(forest.nodes.size()) - 1, a.group, false};
    frontier.erase(frontier.begin() + pick + 1);
    remaining[a.group] -= 1;
  }
  for (const auto& [group, target] : roots_per_group) {
    if (remaining[group] != target)
      throw std::logic_error("coalesce_forest: group stuck above its root target");
  }
  for (const Slot& s : frontier)
    if (!s.fixed) forest.roots.push_back(s.node);
  return forest;
}

enum class AnchorPolicy { WeightedGeodesic };

/**
 * Leaves-to-root anchor pass. Continuous internal anchors are the descendant-
 * weighted mean of the children; token anchors of internal nodes are the mask.
 * Leaf anchors were set from x1_aug at coalescence time and stay untouched.
 */
inline void assign_anchors(Forest& forest, AnchorPolicy /*policy*/, int mask_token) {
  // merge order guarantees children precede parents in the arena
  for (ForestNode& n : forest.nodes) {
    if (n.is_leaf()) continue;
    const ForestNode& l = forest.nodes[n.left];
    const ForestNode& r = forest.nodes[n.right];
    const double wl = l.w, wr = r.w;
    n.anchor.continuous.resize(l.anchor.continuous.size());
    for (size_t i = 0; i < n.anchor.continuous.size(); ++i)
      n.anchor.continuous[i] =
          (wl * l.anchor.continuous[i] + wr * r.anchor.continuous[i]) / (wl + wr);
    n.anchor.token = mask_token;
  }
}

}  // namespace branchflow
