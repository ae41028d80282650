#pragma once

// Reading the thought/agent structure off a trained model: estimated support,
// per-agent thought sets, agreement levels, shared/private splits.

#include "thoughtcomm/assignment.hpp"
#include "thoughtcomm/autoencoder.hpp"
#include "thoughtcomm/synthgen.hpp"

#include <vector>

namespace thoughtcomm {

inline constexpr double kDefaultSupportThreshold = 0.1;
inline constexpr int kDefaultProbeCount = 256;

struct SupportEstimate {
  Matrix mean_abs_jacobian;  // n_h x n_z, unnormalized
  IndexMatrix support;       // 1 iff column-normalized mean |J| >= tau
  double tau = kDefaultSupportThreshold;
  int sample_count = 0;

  Matrix normalized() const;
  // Columns with no entry at or above tau.
  std::vector<int> inactive_columns() const;
};

/// Threshold a column-max-normalized mean |J| matrix.
SupportEstimate threshold_support(Matrix mean_abs_jacobian, double tau, int sample_count);

/// Encodes the probes, averages |J| of the decoder over the encoded points,
/// normalizes each column by its maximum and thresholds at tau.
SupportEstimate estimate_support(const MlpModel<double>& model, const Matrix& probe_states, double tau);

/// Sorted thought indices per agent.
struct AgentThoughtSets {
  std::vector<std::vector<int>> sets;

  int n_agents() const { return static_cast<int>(sets.size()); }
};

AgentThoughtSets thought_sets(const IndexMatrix& support, const AgentBlocks& blocks);
inline AgentThoughtSets thought_sets(const SupportEstimate& est, const AgentBlocks& blocks) {
  return thought_sets(est.support, blocks);
}

struct AgreementVector {
  std::vector<int> alpha;
};

AgreementVector agreement(const AgentThoughtSets& sets, int n_z);

struct SharedPrivate {
  std::vector<int> shared;
  std::vector<int> private_i;
  std::vector<int> private_j;
};

SharedPrivate shared_private(const AgentThoughtSets& sets, int i, int j);

/// Maximum-overlap matching of estimated columns (rows of the map) onto true
/// columns. Ties in overlap are broken by fewer mismatched entries. Scores are
/// the overlap counts. Evaluation only.
PermutationMap match_columns(const IndexMatrix& estimated, const IndexMatrix& truth);
inline PermutationMap match_columns(const SupportEstimate& est, const SupportMatrix& truth) {
  return match_columns(est.support, truth.entries);
}

/// Agent subset holding each thought, in ascending agent order.
std::vector<std::vector<int>> holder_subsets(const AgentThoughtSets& sets, int n_z);

}  // namespace thoughtcomm
