#pragma once

// Mock multi-agent loop: parametric agents produce states from a task vector
// and an injected prefix, and the pipeline encodes, routes and injects
// thoughts across rounds.

#include "thoughtcomm/autoencoder.hpp"
#include "thoughtcomm/routing.hpp"
#include "thoughtcomm/structure.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace thoughtcomm {

/// state = tanh(task_weight * task + prefix_weight * vec(prefix) + offset),
/// with vec() taken row-major; the answer is the 1-based argmax of
/// readout * state, ties going to the lower index.
struct MockAgent {
  int index = 0;
  Matrix task_weight;    // state_width x task_dim
  Matrix prefix_weight;  // state_width x (m * d)
  Vector offset;         // state_width
  Matrix readout;        // classes x state_width

  int state_width() const { return static_cast<int>(task_weight.rows()); }
  Vector state(const Vector& task, const Matrix& prefix) const;
  int answer(const Vector& state) const;
};

/// Agents with identical layout. Each state is [shared coordinates | private
/// coordinates]; the task is [shared part | private part of agent 0 | ...].
/// Shared coordinates depend on the shared task part and, through a
/// direction inside the range of the agent's prefix map, on the agent's own
/// private part. The readout looks at shared coordinates only and is the
/// same for every agent.
struct MockFamilyConfig {
  int n_agents = 2;
  int shared_task_dims = 2;
  int private_task_dims = 1;
  int shared_state_dims = 3;
  int private_state_dims = 2;
  int classes = 3;
  int prefix_length = 1;
  int embedding_width = 4;
  // Size of the private leak into shared coordinates.
  double private_leak = 0.6;

  int task_dim() const { return shared_task_dims + n_agents * private_task_dims; }
  int state_width() const { return shared_state_dims + private_state_dims; }
  void validate() const;
};

struct MockFamily {
  MockFamilyConfig config;
  std::vector<MockAgent> agents;

  AgentBlocks blocks() const;
};

MockFamily planted_family(const MockFamilyConfig& config, SeededRng& rng);

Vector draw_task(const MockFamily& family, SeededRng& rng);

/// Concatenated zero-prefix states for `n` Laplace(0,1) tasks (rows).
Matrix mock_states(const MockFamily& family, int n, SeededRng& rng);

struct RoundTrace {
  int round = 0;  // 1-based
  std::vector<Vector> states;
  Vector latents;
  std::vector<RoutedThoughts> routed;
  std::vector<Matrix> prefixes;
  std::vector<int> answers;
  bool consensus = false;
};

using Episode = std::vector<RoundTrace>;

/// Round t reads each agent's state under the previous round's prefix (zero
/// in round 1), encodes the concatenated states, routes per agent, builds
/// prefixes, and records the answers given under the new prefixes. The
/// support is re-estimated from the round's state at threshold tau unless a
/// fixed estimate is passed.
Episode run_episode(const std::vector<MockAgent>& agents, const MlpModel<double>& model, const Adapter& adapter,
                    const WeightTable& weights, double tau, int rounds, const Vector& task,
                    const SupportEstimate* fixed_support = nullptr);

/// Fraction of episodes whose final round reached consensus.
double consensus_rate(const std::vector<Episode>& episodes);

struct SurrogateConfig {
  int steps = 300;
  int batch_tasks = 32;
  int rounds = 2;
  double prefix_penalty = 0.01;
  AdamHyper adam{0.01};
  void validate() const;
};

/// Routed inputs of one agent in one round, held fixed while the adapter is
/// differentiated.
struct SurrogateSample {
  Vector task;
  std::vector<Vector> inputs;  // per agent, zero-padded to n_route
};

/// Mean over samples of sum_k |S(post_k) - mean_{j != k} S(post_j)|^2 plus
/// prefix_penalty * sum_k |prefix_k|^2, where S keeps shared coordinates.
double surrogate_loss(const MockFamily& family, const Matrix& adapter_weight,
                      const std::vector<SurrogateSample>& samples, double prefix_penalty, Matrix* grad = nullptr);

/// Adam on the adapter weight. Each step runs episodes under the current
/// adapter to collect routed inputs for every round, then takes one step on
/// the surrogate with those inputs fixed.
Adapter train_adapter(const MockFamily& family, const MlpModel<double>& model, const WeightTable& weights,
                      const SupportEstimate& support, const SurrogateConfig& cfg, SeededRng& rng);

nlohmann::ordered_json round_to_json(const RoundTrace& round, int episode, const std::string& mode);

}  // namespace thoughtcomm
