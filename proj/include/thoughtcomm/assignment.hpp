#pragma once

#include "thoughtcomm/numerics.hpp"

#include <vector>

namespace thoughtcomm {

/// Bijection row i -> column target[i] with a per-pair score.
struct PermutationMap {
  std::vector<int> target;
  std::vector<double> score;

  int size() const { return static_cast<int>(target.size()); }
  bool is_bijection() const;
  std::vector<int> inverse() const;
};

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres
/// with potentials, O(n^3)). Scores are the matched cost entries.
PermutationMap hungarian(const Matrix& cost);

double assignment_cost(const Matrix& cost, const PermutationMap& map);

}  // namespace thoughtcomm
