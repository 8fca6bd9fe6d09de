#pragma once

#include <vector>

namespace branchflow {

/**
 * One sequence slot: a continuous vector (possibly empty for discrete-only
 * tasks) plus a token id. `fixed` marks conditioning elements that never move
 * and never join a tree.
 */
struct Element {
  std::vector<double> continuous;
  int token = 0;
  int group = 0;
  bool fixed = false;
};

using Sequence = std::vector<Element>;

}  // namespace branchflow
