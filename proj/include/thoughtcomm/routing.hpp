#pragma once

// Agreement-weighted routing of recovered thoughts and the linear adapter
// that turns a routed vector into a prefix matrix.

#include "thoughtcomm/structure.hpp"

#include <json.hpp>

#include <map>
#include <vector>

namespace thoughtcomm {

/// Weight per agreement level.
struct WeightTable {
  std::map<int, double> weights;

  /// w_alpha = alpha / n_agents for alpha in [1, n_agents].
  static WeightTable proportional(int n_agents);

  bool has(int level) const { return weights.count(level) != 0; }
  double at(int level) const;
  // Throws InvalidArgument unless levels 1..n_agents all carry finite weights.
  void validate(int n_agents) const;
};

struct RoutedThoughts {
  Vector values;
  std::vector<int> sources;  // latent index of each entry
  std::vector<int> levels;   // agreement level of each entry

  int size() const { return static_cast<int>(values.size()); }
};

/// Selects the thoughts of `agent`, scales each by the weight of its
/// agreement level, and orders them by descending level then ascending
/// index.
RoutedThoughts route(const Vector& latents_row, const AgentThoughtSets& sets, const AgreementVector& alpha,
                     const WeightTable& weights, int agent);

struct Adapter {
  Matrix weight;  // (m * d) x n_route
  int prefix_length = 1;
  int embedding_width = 1;

  int n_route() const { return static_cast<int>(weight.cols()); }
  static Adapter zeros(int n_route, int prefix_length, int embedding_width);
  void validate() const;
};

/// Zero-pads the routed values to n_route, applies the adapter, and reshapes
/// row-major to m x d.
Matrix make_prefix(const Adapter& adapter, const RoutedThoughts& routed);
Vector padded_values(const RoutedThoughts& routed, int n_route);

nlohmann::ordered_json adapter_to_json(const Adapter& adapter);
Adapter adapter_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json weights_to_json(const WeightTable& weights);
WeightTable weights_from_json(const nlohmann::ordered_json& j);

}  // namespace thoughtcomm
