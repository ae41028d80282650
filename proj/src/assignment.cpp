#include "thoughtcomm/assignment.hpp"

#include <limits>

namespace thoughtcomm {

bool PermutationMap::is_bijection() const {
  std::vector<char> hit(target.size(), 0);
  for (int t : target) {
    if (t < 0 || t >= size() || hit[t]) return false;
    hit[t] = 1;
  }
  return true;
}

std::vector<int> PermutationMap::inverse() const {
  std::vector<int> inv(target.size(), -1);
  for (int i = 0; i < size(); ++i) inv[target[i]] = i;
  return inv;
}

PermutationMap hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw InvalidArgument("hungarian: cost matrix must be square");
  if (!cost.allFinite()) throw InvalidArgument("hungarian: cost matrix must be finite");
  const int n = static_cast<int>(cost.rows());
  PermutationMap out;
  if (n == 0) return out;

  // 1-based potentials u (rows), v (cols); p[j] = row matched to column j.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  out.target.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.target[p[j] - 1] = j - 1;
  out.score.resize(n);
  for (int i = 0; i < n; ++i) out.score[i] = cost(i, out.target[i]);
  return out;
}

double assignment_cost(const Matrix& cost, const PermutationMap& map) {
  double total = 0;
  for (int i = 0; i < map.size(); ++i) total += cost(i, map.target[i]);
  return total;
}

}  // namespace thoughtcomm
