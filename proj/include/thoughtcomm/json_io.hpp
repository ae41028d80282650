#pragma once

// Matrices as nested JSON arrays (one array per row).

#include "thoughtcomm/numerics.hpp"

#include <json.hpp>

#include <algorithm>
#include <initializer_list>
#include <string>

namespace thoughtcomm {

/// Throws InvalidArgument unless `j` is an object whose keys are all in `allowed`.
inline void check_keys(const nlohmann::ordered_json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw InvalidArgument(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename Derived>
nlohmann::ordered_json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Throws InvalidArgument on ragged rows or a non-array value.
template <typename M>
M matrix_from_json(const nlohmann::ordered_json& j, Eigen::Index empty_cols = 0) {
  if (!j.is_array()) throw InvalidArgument("expected a JSON array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : empty_cols;
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) throw InvalidArgument("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<typename M::Scalar>();
  }
  return m;
}

template <typename Derived>
nlohmann::ordered_json vector_to_json(const Eigen::MatrixBase<Derived>& v) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <typename V>
V vector_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_array()) throw InvalidArgument("expected a JSON array");
  V v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<typename V::Scalar>();
  return v;
}

}  // namespace thoughtcomm
