#pragma once

// Experiment configuration, presets, and the generate/train/evaluate and
// simulate pipelines shared by the command-line tool and the test suites.

#include "thoughtcomm/eval.hpp"
#include "thoughtcomm/harness.hpp"
#include "thoughtcomm/model_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace thoughtcomm {

struct GeneratorConfig {
  std::vector<int> block_dims{2, 2};
  std::vector<ThoughtGroup> groups{{{0}, 1}, {{1}, 1}, {{0, 1}, 1}};
  int n_samples = 20000;
  std::optional<double> p_row;
  MixingOptions mixing{};

  void validate() const;
};

struct EvalConfig {
  double tau = kDefaultSupportThreshold;
  int probe_count = kDefaultProbeCount;
  Correlation correlation = Correlation::pearson;

  void validate() const;
};

struct RoutingConfig {
  // Unset means w_alpha = alpha / n_agents.
  std::optional<WeightTable> weights;
};

struct HarnessConfig {
  MockFamilyConfig family{};
  int rounds = 2;
  int episodes = 100;
  int train_samples = 5000;
  double tau = kDefaultSupportThreshold;
  TrainConfig training = default_harness_training();
  SurrogateConfig surrogate{};

  static TrainConfig default_harness_training();
  void validate() const;
};

struct SweepConfig {
  std::vector<int> dims{8, 16, 32};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Hidden width of each setting is max(min_width, width_per_dim * dim).
  int width_per_dim = 4;
  int min_width = 128;

  void validate() const;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "run";
  GeneratorConfig generator{};
  TrainConfig training{};
  EvalConfig evaluation{};
  RoutingConfig routing{};
  HarnessConfig harness{};
  SweepConfig sweep{};

  /// Copies the top-level seed into the training configs.
  void resolve_seeds();
  void validate() const;
};

/// All defaults are written out. Reading rejects unknown keys at every level
/// and validates the result.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);

/// Two agents with blocks [2, 2] and one private thought each plus one
/// shared thought; N = 20000.
ExperimentConfig preset_basic(std::uint64_t seed);

inline constexpr double kIdentifiableMcc = 0.9;

std::vector<int> desk_sweep_dims();
std::vector<int> full_sweep_dims();

/// The base config of an MCC sweep over `dims` and `seeds`.
ExperimentConfig preset_mcc_sweep(std::vector<int> dims, std::vector<std::uint64_t> seeds);

/// One setting of a sweep: n_z = n_h = dim split over 2 agents (dim <= 8) or
/// 4 agents, with private thoughts per agent and thoughts shared by each
/// pair.
ExperimentConfig sweep_setting(const ExperimentConfig& base, int dim, std::uint64_t seed);

struct GeneratedData {
  Dataset dataset;
  MixingFunction mixing;
};

GeneratedData generate(const ExperimentConfig& cfg);

/// Held-out evaluation: the rows after the training split. Support probes
/// are the first probe_count held-out rows.
EvalReport evaluate(const MlpModel<double>& model, const Dataset& data, const TrainConfig& training,
                    const EvalConfig& eval, const nlohmann::ordered_json& training_summary = {});

/// Evaluates the ground-truth latents against themselves (MCC 1, exact
/// support); a check of the evaluation path.
EvalReport evaluate_truth(const Dataset& data, const TrainConfig& training, const EvalConfig& eval);

struct SimulationResult {
  MockFamily family;
  MlpModel<double> model;
  SupportEstimate support;
  Adapter adapter;
  WeightTable weights;
  std::vector<Episode> routed;
  std::vector<Episode> zero;
  double routed_consensus = 0;
  double zero_consensus = 0;
};

/// Builds the planted family, trains the autoencoder on zero-prefix states,
/// trains the adapter, then runs the same tasks with the trained adapter and
/// with a zero adapter.
SimulationResult simulate(const ExperimentConfig& cfg);

}  // namespace thoughtcomm
