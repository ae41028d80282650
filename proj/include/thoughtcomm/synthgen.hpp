#pragma once

// Ground-truth latent worlds: support patterns, invertible mixings with a
// prescribed Jacobian support, and sampled datasets of agent states.

#include "thoughtcomm/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace thoughtcomm {

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct GenerationFailed : NumericError {
  GenerationFailed(const std::string& what, double best_condition)
      : NumericError(what), best_condition(best_condition) {}
  double best_condition;
};

/// Contiguous, ordered, disjoint state ranges, one per agent. Agent k owns
/// rows [begin(k), end(k)) of the concatenated state.
class AgentBlocks {
 public:
  AgentBlocks() = default;
  explicit AgentBlocks(std::vector<int> block_dims);

  int n_agents() const { return static_cast<int>(dims_.size()); }
  int n_h() const { return offsets_.empty() ? 0 : offsets_.back(); }
  int begin(int agent) const { return offsets_[agent]; }
  int end(int agent) const { return offsets_[agent + 1]; }
  int dim(int agent) const { return dims_[agent]; }
  int agent_of_row(int row) const;
  const std::vector<int>& dims() const { return dims_; }

  friend bool operator==(const AgentBlocks&, const AgentBlocks&) = default;

 private:
  std::vector<int> dims_;
  std::vector<int> offsets_;
};

/// `count` thoughts held by exactly the agents in `agents` (0-based).
struct ThoughtGroup {
  std::vector<int> agents;
  int count = 0;

  friend bool operator==(const ThoughtGroup&, const ThoughtGroup&) = default;
};

/// Binary n_h x n_z dependency pattern plus the group each column came from.
struct SupportMatrix {
  IndexMatrix entries;
  AgentBlocks blocks;
  std::vector<int> column_group;

  int n_h() const { return static_cast<int>(entries.rows()); }
  int n_z() const { return static_cast<int>(entries.cols()); }

  // Throws InvalidArgument on an empty column or a thoughtless agent.
  void validate() const;
};

struct SupportOptions {
  // Within-block row density; unset means 1.0 for blocks of <= 4 rows and
  // 0.7 for larger blocks.
  std::optional<double> p_row;
  // Resample the row thinning until the pattern admits full column rank.
  bool require_structural_rank = true;
};

double default_p_row(int block_dim);

SupportMatrix sample_support(const std::vector<int>& block_dims, const std::vector<ThoughtGroup>& groups,
                             SeededRng& rng, const SupportOptions& options = {});

/// Size of a maximum matching between columns and rows of the nonzero pattern.
int structural_rank(const IndexMatrix& pattern);

struct MixingOptions {
  double cond_max = 50.0;
  // Bound on |a| for the elementwise maps x + a tanh(x); 0 gives a linear mixing.
  double max_amplitude = 0.9;
  int max_attempts = 100;
};

/// f(z) = s_out(W s_in(z)) with s(x) = x + a tanh(x) per coordinate and W
/// zero off the support mask.
struct MixingFunction {
  Vector amp_in;   // n_z
  Vector amp_out;  // n_h
  Matrix weight;   // n_h x n_z
  SupportMatrix mask;
  double condition_number = 0;

  int n_h() const { return static_cast<int>(weight.rows()); }
  int n_z() const { return static_cast<int>(weight.cols()); }

  Vector apply(const Vector& z) const;
  // Row-wise application to an N x n_z matrix.
  Matrix apply_rows(const Matrix& latents) const;
  Matrix jacobian(const Vector& z) const;
};

inline double elementwise_map(double x, double a) { return x + a * std::tanh(x); }
inline double elementwise_map_derivative(double x, double a) {
  const double t = std::tanh(x);
  return 1.0 + a * (1.0 - t * t);
}

MixingFunction build_mixing(const SupportMatrix& support, SeededRng& rng, const MixingOptions& options = {});

struct Dataset {
  Matrix states;   // N x n_h
  Matrix latents;  // N x n_z, evaluation only
  AgentBlocks blocks;
  SupportMatrix support;
  std::uint64_t seed = 0;
  std::string generator_config;  // serialized JSON of the generating config

  Eigen::Index n_samples() const { return states.rows(); }
};

Dataset generate_dataset(const MixingFunction& mixing, Eigen::Index n_samples, SeededRng& rng);

// On-disk layout: states.bin, latents.bin (little-endian float32, row-major,
// no header) and meta.json.
inline constexpr int kDatasetFormatVersion = 1;
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

void write_f32_matrix(const Matrix& m, const std::filesystem::path& file);
Matrix read_f32_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols);

}  // namespace thoughtcomm
