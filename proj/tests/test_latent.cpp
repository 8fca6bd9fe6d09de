#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "branchflow/latent.hpp"
#include "test_util.hpp"

using namespace branchflow;

namespace {

Sequence tokens_seq(std::initializer_list<int> toks, int group = 0) {
  Sequence seq;
  for (int t : toks) {
    Element e;
    e.token = t;
    e.group = group;
    seq.push_back(e);
  }
  return seq;
}

std::string shape_of(const Forest& forest, int node) {
  const ForestNode& n = forest.nodes[node];
  if (n.is_leaf()) return std::string(1, char('a' + n.leaf_pos));
  return "(" + shape_of(forest, n.left) + shape_of(forest, n.right) + ")";
}

void collect_leaves(const Forest& forest, int node, std::vector<int>& out) {
  const ForestNode& n = forest.nodes[node];
  if (n.is_leaf()) {
    out.push_back(n.leaf_pos);
    return;
  }
  collect_leaves(forest, n.left, out);
  collect_leaves(forest, n.right, out);
}

}  // namespace

// ---------------------------------------------------------------------------
// sample_x0
// ---------------------------------------------------------------------------

TEST_CASE("sample_x0 with lambda 0 gives one element per group") {
  Rng rng(1);
  Sequence x1 = tokens_seq({0, 1, 2});
  for (int i = 0; i < 50; ++i) {
    const Sequence x0 = sample_x0(x1, 0.0, 0, 9, rng);
    REQUIRE(x0.size() == 1);
    CHECK(x0[0].token == 9);
    CHECK(x0[0].group == 0);
  }
}

TEST_CASE("sample_x0 keeps two groups apart with their ids") {
  Rng rng(2);
  Sequence x1 = tokens_seq({0, 1}, 0);
  for (const Element& e : tokens_seq({2, 3}, 1)) x1.push_back(e);
  const Sequence x0 = sample_x0(x1, 0.0, 2, 4, rng);
  REQUIRE(x0.size() == 2);
  CHECK(x0[0].group == 0);
  CHECK(x0[1].group == 1);
  CHECK(x0[0].continuous.size() == 2);
}

TEST_CASE("sample_x0 length distribution: mean 21 at lambda 20") {
  // DERIVED oracle: Poisson mean
  Rng rng(3);
  Sequence x1 = tokens_seq({0});
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) total += static_cast<double>(sample_x0(x1, 20.0, 0, 1, rng).size());
  CHECK(total / n == doctest::Approx(21.0).epsilon(0.005));
}

TEST_CASE("sample_x0 rejects empty and non-contiguous groups") {
  Rng rng(4);
  CHECK_THROWS_AS(sample_x0({}, 0.0, 0, 0, rng), std::invalid_argument);
  Sequence bad = tokens_seq({0}, 0);
  for (const Element& e : tokens_seq({1}, 1)) bad.push_back(e);
  for (const Element& e : tokens_seq({2}, 0)) bad.push_back(e);
  CHECK_THROWS_AS(sample_x0(bad, 0.0, 0, 0, rng), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// insert_deletions
// ---------------------------------------------------------------------------

TEST_CASE("rate scheme with d_r = 1 and l1 >= l0 inserts nothing") {
  Rng rng(5);
  const Sequence x1 = tokens_seq({0, 1});
  for (int i = 0; i < 1000; ++i) {
    auto [aug, del] = insert_deletions(x1, {{0, 2}}, 1.0, DeletionScheme::Rate, rng);
    CHECK(aug.size() == 2);
    CHECK(std::none_of(del.begin(), del.end(), [](bool b) { return b; }));
  }
}

TEST_CASE("rate scheme insertion count has the Poisson mean of the formula") {
  // l0 = 1, l1 = 4, d_r = 1.2 -> Poisson(max(1,4)*1.2 - 4) = Poisson(0.8)
  Rng rng(6);
  const Sequence x1 = tokens_seq({0, 1, 2, 3});
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto [aug, del] = insert_deletions(x1, {{0, 1}}, 1.2, DeletionScheme::Rate, rng);
    total += static_cast<double>(aug.size() - x1.size());
  }
  CHECK(total / n == doctest::Approx(0.8).epsilon(0.025));
}

TEST_CASE("rate scheme keeps condition 1 when l0 exceeds l1") {
  Rng rng(7);
  const Sequence x1 = tokens_seq({0});
  for (int i = 0; i < 10000; ++i) {
    auto [aug, del] = insert_deletions(x1, {{0, 5}}, 1.0, DeletionScheme::Rate, rng);
    CHECK(aug.size() >= 5);
  }
}

TEST_CASE("deletion copies inherit the template state and sit next to it") {
  Rng rng(8);
  Sequence x1 = tokens_seq({7, 8, 9});
  for (Element& e : x1) e.continuous = {static_cast<double>(e.token)};
  for (int i = 0; i < 200; ++i) {
    auto [aug, del] = insert_deletions(x1, {{0, 1}}, 2.0, DeletionScheme::Rate, rng);
    for (size_t k = 0; k < aug.size(); ++k) {
      CHECK(aug[k].continuous[0] == static_cast<double>(aug[k].token));
      if (del[k]) {
        const bool left_match = k > 0 && aug[k - 1].token == aug[k].token;
        const bool right_match = k + 1 < aug.size() && aug[k + 1].token == aug[k].token;
        CHECK((left_match || right_match));
      }
    }
  }
}

TEST_CASE("duplicate_each doubles the sequence with deleted copies") {
  Rng rng(9);
  const Sequence x1 = tokens_seq({0, 1, 2});
  for (int i = 0; i < 200; ++i) {
    auto [aug, del] = insert_deletions(x1, {{0, 1}}, 1.0, DeletionScheme::DuplicateEach, rng);
    REQUIRE(aug.size() == 6);
    CHECK(std::count(del.begin(), del.end(), true) == 3);
    std::vector<int> survivors;
    for (size_t k = 0; k < aug.size(); ++k)
      if (!del[k]) survivors.push_back(aug[k].token);
    CHECK(survivors == std::vector<int>{0, 1, 2});
  }
  CHECK_THROWS_AS(insert_deletions(x1, {{0, 2}}, 1.0, DeletionScheme::DuplicateEach, rng),
                  std::invalid_argument);
}

TEST_CASE("deletion_rate below 1 is a config error when the parameter goes negative") {
  Rng rng(10);
  const Sequence x1 = tokens_seq({0, 1, 2, 3});
  CHECK_THROWS_AS(insert_deletions(x1, {{0, 1}}, 0.5, DeletionScheme::Rate, rng),
                  std::invalid_argument);
}

// ---------------------------------------------------------------------------
// coalesce_forest / assign_anchors
// ---------------------------------------------------------------------------

TEST_CASE("three same-group leaves coalesce to one root of weight 3") {
  Rng rng(11);
  const Sequence leaves = tokens_seq({0, 1, 2});
  const std::vector<bool> del(3, false);
  const Forest f = coalesce_forest(leaves, del, {{0, 1}}, rng);
  REQUIRE(f.roots.size() == 1);
  CHECK(f.nodes[f.roots[0]].w == 3);
  CHECK(f.nodes.size() == 5);  // 3 leaves + 2 merges
}

TEST_CASE("group separation: A,A,B never cross-merges") {
  Rng rng(12);
  Sequence leaves = tokens_seq({0, 1}, 0);
  for (const Element& e : tokens_seq({2}, 1)) leaves.push_back(e);
  const std::vector<bool> del(3, false);
  for (int i = 0; i < 200; ++i) {
    const Forest f = coalesce_forest(leaves, del, {{0, 1}, {1, 1}}, rng);
    REQUIRE(f.roots.size() == 2);
    CHECK(f.nodes[f.roots[0]].w == 2);
    CHECK(f.nodes[f.roots[0]].group == 0);
    CHECK(f.nodes[f.roots[1]].w == 1);
    CHECK(f.nodes[f.roots[1]].group == 1);
  }
}

TEST_CASE("fewer leaves than roots is a contract violation") {
  Rng rng(13);
  const Sequence leaves = tokens_seq({0, 1});
  const std::vector<bool> del(2, false);
  CHECK_THROWS_AS(coalesce_forest(leaves, del, {{0, 3}}, rng), std::invalid_argument);
}

TEST_CASE("planarity and weight consistency over random instances") {
  Rng rng(14);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + rng.uniform_int(10);
    Sequence leaves(n);
    std::vector<bool> del(n, false);
    const int n_roots = 1 + rng.uniform_int(n);
    const Forest f = coalesce_forest(leaves, del, {{0, n_roots}}, rng);
    REQUIRE(static_cast<int>(f.roots.size()) == n_roots);
    std::vector<int> order;
    int w_total = 0;
    for (int r : f.roots) {
      collect_leaves(f, r, order);
      w_total += f.nodes[r].w;
    }
    CHECK(w_total == n);
    for (int i = 0; i < n; ++i) CHECK(order[i] == i);
    for (const ForestNode& nd : f.nodes)
      if (!nd.is_leaf()) CHECK(nd.w == f.nodes[nd.left].w + f.nodes[nd.right].w);
  }
}

TEST_CASE("4-leaf shape frequencies match merge-chain enumeration") {
  // DERIVED oracle: brute-force enumeration of the uniform adjacent-merge
  // chain (the acceptance suite runs the n = 1e5, 0.01 version)
  Rng rng(15);
  const auto expected = bf_test::enumerate_merge_shapes(4);
  REQUIRE(expected.size() == 5);
  CHECK(expected.at("((ab)(cd))") == doctest::Approx(2.0 / 6.0));
  std::map<std::string, double> observed;
  const int n = 30000;
  const Sequence leaves = tokens_seq({0, 0, 0, 0});
  const std::vector<bool> del(4, false);
  for (int i = 0; i < n; ++i) {
    const Forest f = coalesce_forest(leaves, del, {{0, 1}}, rng);
    observed[shape_of(f, f.roots[0])] += 1.0 / n;
  }
  for (const auto& [shape, p] : expected) CHECK(std::fabs(observed[shape] - p) < 0.02);
}

TEST_CASE("anchor merging: midpoint, weighted mean, mask tokens") {
  Rng rng(16);
  SUBCASE("two leaves, equal weights") {
    Sequence leaves = tokens_seq({3, 4});
    leaves[0].continuous = {0.0};
    leaves[1].continuous = {2.0};
    const std::vector<bool> del(2, false);
    Forest f = coalesce_forest(leaves, del, {{0, 1}}, rng);
    assign_anchors(f, AnchorPolicy::WeightedGeodesic, 99);
    const ForestNode& root = f.nodes[f.roots[0]];
    CHECK(root.anchor.continuous[0] == doctest::Approx(1.0));
    CHECK(root.anchor.token == 99);
  }
  SUBCASE("subtree of weight 3 against a single leaf") {
    Sequence leaves = tokens_seq({0, 0, 0, 1});
    for (int i = 0; i < 3; ++i) leaves[i].continuous = {0.0};
    leaves[3].continuous = {4.0};
    const std::vector<bool> del(4, false);
    for (int trial = 0; trial < 50; ++trial) {
      Forest f = coalesce_forest(leaves, del, {{0, 1}}, rng);
      assign_anchors(f, AnchorPolicy::WeightedGeodesic, 9);
      const ForestNode& root = f.nodes[f.roots[0]];
      if (!f.nodes[root.left].is_leaf() && f.nodes[root.left].w == 3) {
        // (w_l a_l + w_r a_r) / (w_l + w_r) = (3*0 + 1*4) / 4
        CHECK(root.anchor.continuous[0] == doctest::Approx(1.0));
      }
      for (const ForestNode& nd : f.nodes)
        if (!nd.is_leaf()) CHECK(nd.anchor.token == 9);
    }
  }
}

// ---------------------------------------------------------------------------
// make_latent invariants
// ---------------------------------------------------------------------------

TEST_CASE("make_latent holds conditions 1 and 2 plus group and fixed separation") {
  Rng rng(17);
  LatentSpec spec;
  spec.lambda_group = 0.7;
  spec.deletion_rate = 1.3;
  for (int trial = 0; trial < 2000; ++trial) {
    // two designable groups with a fixed element in between
    Sequence x1;
    const int l1a = 1 + rng.uniform_int(5);
    const int l1b = 1 + rng.uniform_int(5);
    for (int i = 0; i < l1a; ++i) {
      Element e;
      e.token = rng.uniform_int(3);
      e.continuous = {rng.normal()};
      e.group = 0;
      x1.push_back(e);
    }
    Element fixed;
    fixed.token = 7;
    fixed.continuous = {42.0};
    fixed.fixed = true;
    fixed.group = 100;
    x1.push_back(fixed);
    for (int i = 0; i < l1b; ++i) {
      Element e;
      e.token = rng.uniform_int(3);
      e.continuous = {rng.normal()};
      e.group = 1;
      x1.push_back(e);
    }

    const LatentZ z = make_latent(x1, spec, 1, 3, rng);

    std::map<int, int> aug_len, x0_len;
    for (size_t i = 0; i < z.x1_aug.size(); ++i)
      if (!z.x1_aug[i].fixed) aug_len[z.x1_aug[i].group] += 1;
    for (const Element& e : z.x0)
      if (!e.fixed) x0_len[e.group] += 1;
    for (const auto& [g, l0] : x0_len) CHECK(aug_len[g] >= l0);  // condition 1

    int designable = 0;
    for (size_t i = 0; i < z.x0.size(); ++i) {
      if (z.x0[i].fixed) {
        CHECK(z.x0_root[i] == -1);
      } else {
        ++designable;
        CHECK(z.x0_root[i] >= 0);
      }
    }
    CHECK(static_cast<int>(z.forest.roots.size()) == designable);

    for (int r : z.forest.roots) {
      std::vector<int> leaves;
      collect_leaves(z.forest, r, leaves);
      const int g = z.forest.nodes[r].group;
      for (int lp : leaves) {
        CHECK(z.x1_aug[lp].group == g);
        CHECK_FALSE(z.x1_aug[lp].fixed);
      }
    }
    for (const ForestNode& nd : z.forest.nodes) {
      if (!nd.is_leaf() || nd.deleted) continue;
      CHECK(nd.anchor.token == z.x1_aug[nd.leaf_pos].token);  // condition 2
      CHECK(nd.anchor.continuous == z.x1_aug[nd.leaf_pos].continuous);
    }

    const Sequence x1_rec = z.x1();
    REQUIRE(x1_rec.size() == x1.size());
    for (size_t i = 0; i < x1.size(); ++i) {
      CHECK(x1_rec[i].token == x1[i].token);
      CHECK(x1_rec[i].continuous == x1[i].continuous);
    }
  }
}

// ---------------------------------------------------------------------------
// split / delete operators
// ---------------------------------------------------------------------------

TEST_CASE("split_op duplicates in place and extends paths") {
  AugState st;
  st.elements.push_back({tokens_seq({0})[0], BranchId{0, 0, 0}});
  st.elements.push_back({tokens_seq({1})[0], BranchId{1, 0, 0}});
  st.elements.push_back({tokens_seq({2})[0], BranchId{2, 0, 0}});
  const AugState out = split_op(st, 1);
  REQUIRE(out.elements.size() == 4);
  CHECK(out.elements[0].value.token == 0);
  CHECK(out.elements[1].value.token == 1);
  CHECK(out.elements[2].value.token == 1);
  CHECK(out.elements[3].value.token == 2);
  CHECK(out.elements[1].branch.depth == 1);
  CHECK(out.elements[2].branch.depth == 1);
  CHECK(((out.elements[1].branch.path >> 0) & 1) == 0);
  CHECK(((out.elements[2].branch.path >> 0) & 1) == 1);
  // prefix-consistency with the parent
  CHECK(out.elements[1].branch.tree == st.elements[1].branch.tree);
  CHECK((out.elements[1].branch.path & ((uint64_t{1} << st.elements[1].branch.depth) - 1)) ==
        st.elements[1].branch.path);
}

TEST_CASE("del_op removes one element preserving order") {
  AugState st;
  for (int i = 0; i < 3; ++i) st.elements.push_back({tokens_seq({i})[0], BranchId{i, 0, 0}});
  const AugState out = del_op(st, 1);
  REQUIRE(out.elements.size() == 2);
  CHECK(out.elements[0].value.token == 0);
  CHECK(out.elements[1].value.token == 2);
  CHECK_THROWS_AS(del_op(st, 3), std::out_of_range);
  CHECK_THROWS_AS(split_op(st, 3), std::out_of_range);

  // split then delete one child restores the length
  const AugState split = split_op(st, 0);
  CHECK(del_op(split, 0).elements.size() == st.elements.size());
}

TEST_CASE("single-element state splits to length 2") {
  AugState st;
  st.elements.push_back({Element{}, BranchId{0, 0, 0}});
  CHECK(split_op(st, 0).elements.size() == 2);
}
