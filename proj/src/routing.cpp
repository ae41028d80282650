#include "thoughtcomm/routing.hpp"

#include "thoughtcomm/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace thoughtcomm {

WeightTable WeightTable::proportional(int n_agents) {
  if (n_agents < 1) throw InvalidArgument("WeightTable: need at least one agent");
  WeightTable w;
  for (int a = 1; a <= n_agents; ++a) w.weights[a] = static_cast<double>(a) / static_cast<double>(n_agents);
  return w;
}

double WeightTable::at(int level) const {
  const auto it = weights.find(level);
  if (it == weights.end()) throw InvalidArgument("route: no weight for agreement level " + std::to_string(level));
  return it->second;
}

void WeightTable::validate(int n_agents) const {
  for (int a = 1; a <= n_agents; ++a) {
    if (!has(a)) throw InvalidArgument("WeightTable: missing weight for level " + std::to_string(a));
    if (!std::isfinite(weights.at(a))) throw InvalidArgument("WeightTable: non-finite weight for level " + std::to_string(a));
  }
  for (const auto& [level, w] : weights) {
    if (level < 0 || level > n_agents) throw InvalidArgument("WeightTable: level " + std::to_string(level) + " out of range");
  }
}

RoutedThoughts route(const Vector& latents_row, const AgentThoughtSets& sets, const AgreementVector& alpha,
                     const WeightTable& weights, int agent) {
  if (agent < 0 || agent >= sets.n_agents()) throw InvalidArgument("route: agent index out of range");
  if (static_cast<Eigen::Index>(alpha.alpha.size()) != latents_row.size())
    throw InvalidArgument("route: agreement vector and latent row differ in length");
  std::vector<int> picked = sets.sets[agent];
  for (int j : picked) {
    if (j < 0 || j >= latents_row.size()) throw InvalidArgument("route: thought index out of range");
  }
  std::stable_sort(picked.begin(), picked.end(), [&](int a, int b) {
    if (alpha.alpha[a] != alpha.alpha[b]) return alpha.alpha[a] > alpha.alpha[b];
    return a < b;
  });

  RoutedThoughts out;
  out.values.resize(static_cast<Eigen::Index>(picked.size()));
  for (std::size_t k = 0; k < picked.size(); ++k) {
    const int j = picked[k];
    const int level = alpha.alpha[j];
    out.values(static_cast<Eigen::Index>(k)) = weights.at(level) * latents_row(j);
    out.sources.push_back(j);
    out.levels.push_back(level);
  }
  return out;
}

Adapter Adapter::zeros(int n_route, int prefix_length, int embedding_width) {
  if (n_route < 0 || prefix_length < 1 || embedding_width < 1) throw InvalidArgument("Adapter: invalid shape");
  Adapter a;
  a.prefix_length = prefix_length;
  a.embedding_width = embedding_width;
  a.weight = Matrix::Zero(static_cast<Eigen::Index>(prefix_length) * embedding_width, n_route);
  return a;
}

void Adapter::validate() const {
  if (prefix_length < 1 || embedding_width < 1) throw InvalidArgument("Adapter: prefix shape must be positive");
  if (weight.rows() != static_cast<Eigen::Index>(prefix_length) * embedding_width)
    throw InvalidArgument("Adapter: weight rows do not equal m * d");
  if (!weight.allFinite()) throw InvalidArgument("Adapter: non-finite weights");
}

Vector padded_values(const RoutedThoughts& routed, int n_route) {
  if (routed.size() > n_route)
    throw InvalidArgument("make_prefix: " + std::to_string(routed.size()) + " routed values exceed width " +
                          std::to_string(n_route));
  Vector v = Vector::Zero(n_route);
  v.head(routed.size()) = routed.values;
  return v;
}

Matrix make_prefix(const Adapter& adapter, const RoutedThoughts& routed) {
  adapter.validate();
  const Vector flat = adapter.weight * padded_values(routed, adapter.n_route());
  Matrix prefix(adapter.prefix_length, adapter.embedding_width);
  for (int i = 0; i < adapter.prefix_length; ++i)
    for (int k = 0; k < adapter.embedding_width; ++k) prefix(i, k) = flat(i * adapter.embedding_width + k);
  return prefix;
}

nlohmann::ordered_json adapter_to_json(const Adapter& adapter) {
  nlohmann::ordered_json j;
  j["prefix_length"] = adapter.prefix_length;
  j["embedding_width"] = adapter.embedding_width;
  j["n_route"] = adapter.n_route();
  j["weight"] = matrix_to_json(adapter.weight);
  return j;
}

Adapter adapter_from_json(const nlohmann::ordered_json& j) {
  check_keys(j, {"prefix_length", "embedding_width", "n_route", "weight"}, "adapter");
  try {
    Adapter a;
    a.prefix_length = j.at("prefix_length").get<int>();
    a.embedding_width = j.at("embedding_width").get<int>();
    a.weight = matrix_from_json<Matrix>(j.at("weight"), j.at("n_route").get<Eigen::Index>());
    if (a.weight.cols() != j.at("n_route").get<Eigen::Index>()) throw InvalidArgument("adapter: n_route mismatch");
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("adapter: ") + e.what());
  }
}

nlohmann::ordered_json weights_to_json(const WeightTable& weights) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [level, w] : weights.weights) j[std::to_string(level)] = w;
  return j;
}

WeightTable weights_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw InvalidArgument("weights: expected an object keyed by agreement level");
  WeightTable w;
  for (const auto& [key, value] : j.items()) {
    std::size_t used = 0;
    int level = 0;
    try {
      level = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size()) throw InvalidArgument("weights: level '" + key + "' is not an integer");
    if (!value.is_number()) throw InvalidArgument("weights: level " + key + " is not a number");
    w.weights[level] = value.get<double>();
  }
  return w;
}

}  // namespace thoughtcomm
