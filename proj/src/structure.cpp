#include "thoughtcomm/structure.hpp"

#include <algorithm>
#include <iterator>

namespace thoughtcomm {

Matrix SupportEstimate::normalized() const {
  Matrix out = mean_abs_jacobian;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double peak = out.col(j).maxCoeff();
    if (peak > 0) out.col(j) /= peak;
    else out.col(j).setZero();
  }
  return out;
}

std::vector<int> SupportEstimate::inactive_columns() const {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < support.cols(); ++j)
    if (support.col(j).maxCoeff() == 0) out.push_back(static_cast<int>(j));
  return out;
}

SupportEstimate threshold_support(Matrix mean_abs_jacobian, double tau, int sample_count) {
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("estimate_support: tau must lie in (0, 1)");
  SupportEstimate est;
  est.mean_abs_jacobian = std::move(mean_abs_jacobian);
  est.tau = tau;
  est.sample_count = sample_count;
  const Matrix norm = est.normalized();
  est.support = (norm.array() >= tau && norm.array() > 0).cast<int>();
  return est;
}

SupportEstimate estimate_support(const MlpModel<double>& model, const Matrix& probe_states, double tau) {
  if (probe_states.rows() < 1) throw InvalidArgument("estimate_support: no probe states");
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("estimate_support: tau must lie in (0, 1)");
  const Matrix latents = encode(model, probe_states);
  Matrix acc = Matrix::Zero(model.input_width(), model.latent_width());
  for (Eigen::Index r = 0; r < latents.rows(); ++r)
    acc += decoder_jacobian(model, Vector(latents.row(r).transpose())).cwiseAbs();
  acc /= static_cast<double>(latents.rows());
  return threshold_support(std::move(acc), tau, static_cast<int>(latents.rows()));
}

AgentThoughtSets thought_sets(const IndexMatrix& support, const AgentBlocks& blocks) {
  if (blocks.n_h() > support.rows()) throw InvalidArgument("thought_sets: blocks exceed support rows");
  AgentThoughtSets out;
  out.sets.resize(blocks.n_agents());
  for (int k = 0; k < blocks.n_agents(); ++k) {
    for (Eigen::Index j = 0; j < support.cols(); ++j) {
      if (support.block(blocks.begin(k), j, blocks.dim(k), 1).maxCoeff() > 0) out.sets[k].push_back(static_cast<int>(j));
    }
  }
  return out;
}

AgreementVector agreement(const AgentThoughtSets& sets, int n_z) {
  AgreementVector out;
  out.alpha.assign(n_z, 0);
  for (const auto& s : sets.sets) {
    for (int j : s) {
      if (j < 0 || j >= n_z) throw InvalidArgument("agreement: thought index out of range");
      ++out.alpha[j];
    }
  }
  return out;
}

SharedPrivate shared_private(const AgentThoughtSets& sets, int i, int j) {
  if (i == j) throw InvalidArgument("shared_private: agents must differ");
  if (i < 0 || j < 0 || i >= sets.n_agents() || j >= sets.n_agents())
    throw InvalidArgument("shared_private: agent index out of range");
  const auto& a = sets.sets[i];
  const auto& b = sets.sets[j];
  SharedPrivate out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out.shared));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out.private_i));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(out.private_j));
  return out;
}

PermutationMap match_columns(const IndexMatrix& estimated, const IndexMatrix& truth) {
  if (estimated.cols() != truth.cols()) throw InvalidArgument("match_columns: column counts differ");
  if (estimated.rows() != truth.rows()) throw InvalidArgument("match_columns: row counts differ");
  const Eigen::Index n = truth.cols();
  const double rows = static_cast<double>(truth.rows());
  Matrix cost(n, n);
  Matrix overlap(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto e = estimated.col(i).array() != 0;
      const auto t = truth.col(j).array() != 0;
      overlap(i, j) = static_cast<double>((e && t).count());
      const double mismatch = static_cast<double>((e != t).count());
      cost(i, j) = -overlap(i, j) * (rows + 1) + mismatch;
    }
  }
  PermutationMap map = hungarian(cost);
  for (int i = 0; i < map.size(); ++i) map.score[i] = overlap(i, map.target[i]);
  return map;
}

std::vector<std::vector<int>> holder_subsets(const AgentThoughtSets& sets, int n_z) {
  std::vector<std::vector<int>> out(n_z);
  for (int k = 0; k < sets.n_agents(); ++k)
    for (int j : sets.sets[k]) {
      if (j < 0 || j >= n_z) throw InvalidArgument("holder_subsets: thought index out of range");
      out[j].push_back(k);
    }
  return out;
}

}  // namespace thoughtcomm
