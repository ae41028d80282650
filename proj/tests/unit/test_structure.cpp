#include "thoughtcomm/structure.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

using namespace thoughtcomm;

namespace {

IndexMatrix fig_pattern() {
  IndexMatrix b(2, 3);
  b << 1, 0, 1, 0, 1, 1;
  return b;
}

MlpModel<double> linear_model(const Matrix& decoder) {
  MlpModel<double> m;
  DenseLayer<double> enc, dec;
  enc.weight = decoder.completeOrthogonalDecomposition().pseudoInverse();
  enc.bias = Vector::Zero(enc.weight.rows());
  dec.weight = decoder;
  dec.bias = Vector::Zero(decoder.rows());
  m.encoder.push_back(enc);
  m.decoder.push_back(dec);
  return m;
}

}  // namespace

TEST_CASE("estimate_support") {
  SeededRng rng(3);
  const IndexMatrix pattern = oracle::random_pattern(rng, 6, 4, 0.5).cwiseMax(IndexMatrix::Identity(6, 4));
  Matrix w = sample_normal(rng, 6, 4);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = pattern.data()[i] ? 0.5 + std::abs(w.data()[i]) : 0.0;
  const MlpModel<double> m = linear_model(w);
  const Matrix probes = sample_normal(rng, 10, 6);

  SUBCASE("linear decoder recovers its pattern below the smallest normalized entry") {
    const SupportEstimate loose = estimate_support(m, probes, 0.01);
    Matrix norm = loose.normalized();
    double smallest = 1;
    for (Eigen::Index i = 0; i < norm.size(); ++i)
      if (norm.data()[i] > 0) smallest = std::min(smallest, norm.data()[i]);
    for (double tau : {0.01, 0.5 * smallest, 0.99 * smallest}) CHECK(estimate_support(m, probes, tau).support == pattern);
    CHECK(loose.sample_count == 10);
    CHECK((loose.mean_abs_jacobian - w.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("tau just below one keeps the column maxima") {
    const SupportEstimate est = estimate_support(m, probes, 1 - 1e-9);
    for (Eigen::Index j = 0; j < est.support.cols(); ++j) CHECK(est.support.col(j).sum() == 1);
  }
  SUBCASE("higher thresholds never add entries") {
    IndexMatrix prev = estimate_support(m, probes, 0.05).support;
    for (int k = 2; k <= 10; ++k) {
      const IndexMatrix cur = estimate_support(m, probes, 0.05 * k + 0.04).support;
      CHECK((cur.array() <= prev.array()).all());
      prev = cur;
    }
  }
  SUBCASE("zero columns stay zero and are reported inactive") {
    Matrix acc = Matrix::Ones(3, 2);
    acc.col(1).setZero();
    const SupportEstimate est = threshold_support(acc, 0.1, 1);
    CHECK(est.support.col(1).sum() == 0);
    CHECK(est.inactive_columns() == std::vector<int>{1});
    CHECK(est.normalized().col(1).isZero());
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(estimate_support(m, probes, 0.0), InvalidArgument);
    CHECK_THROWS_AS(estimate_support(m, probes, 1.0), InvalidArgument);
    CHECK_THROWS_AS(estimate_support(m, Matrix(0, 6), 0.1), InvalidArgument);
  }
}

TEST_CASE("thought sets and agreement") {
  const AgentBlocks two({1, 1});
  SUBCASE("two agents sharing the last thought") {
    const AgentThoughtSets s = thought_sets(fig_pattern(), two);
    CHECK(s.sets[0] == std::vector<int>{0, 2});
    CHECK(s.sets[1] == std::vector<int>{1, 2});
    CHECK(agreement(s, 3).alpha == std::vector<int>{1, 1, 2});
    const SharedPrivate sp = shared_private(s, 0, 1);
    CHECK(sp.shared == std::vector<int>{2});
    CHECK(sp.private_i == std::vector<int>{0});
    CHECK(sp.private_j == std::vector<int>{1});
    CHECK(holder_subsets(s, 3) == std::vector<std::vector<int>>{{0}, {1}, {0, 1}});
  }
  SUBCASE("all-zero support") {
    const AgentThoughtSets s = thought_sets(IndexMatrix::Zero(2, 3), two);
    CHECK(s.sets[0].empty());
    CHECK(s.sets[1].empty());
    CHECK(agreement(s, 3).alpha == std::vector<int>{0, 0, 0});
  }
  SUBCASE("single block sees every nonzero column") {
    IndexMatrix b(3, 4);
    b << 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 1;
    CHECK(thought_sets(b, AgentBlocks({3})).sets[0] == std::vector<int>{0, 2, 3});
  }
  SUBCASE("five agents holding the same thought") {
    AgentThoughtSets s;
    s.sets.assign(5, {0});
    CHECK(agreement(s, 2).alpha == std::vector<int>{5, 0});
  }
  SUBCASE("identical and disjoint sets") {
    AgentThoughtSets same{{{1, 3}, {1, 3}}};
    const SharedPrivate a = shared_private(same, 0, 1);
    CHECK(a.private_i.empty());
    CHECK(a.private_j.empty());
    AgentThoughtSets apart{{{0, 1}, {2}}};
    CHECK(shared_private(apart, 0, 1).shared.empty());
    CHECK_THROWS_AS(shared_private(apart, 0, 0), InvalidArgument);
  }
  SUBCASE("union of sets equals the active columns") {
    SeededRng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const IndexMatrix b = oracle::random_pattern(rng, 7, 5, 0.3);
      const AgentThoughtSets s = thought_sets(b, AgentBlocks({2, 3, 2}));
      std::set<int> uni;
      for (const auto& v : s.sets) uni.insert(v.begin(), v.end());
      std::set<int> active;
      for (int j = 0; j < 5; ++j)
        if (b.col(j).sum() > 0) active.insert(j);
      CHECK(uni == active);
      const AgreementVector alpha = agreement(s, 5);
      for (int j = 0; j < 5; ++j) {
        int count = 0;
        for (const auto& v : s.sets) count += std::count(v.begin(), v.end(), j);
        CHECK(alpha.alpha[j] == count);
      }
    }
  }
}

TEST_CASE("shared/private partition under random supports") {
  SeededRng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const IndexMatrix b = oracle::random_pattern(rng, 6, 5, 0.35);
    const AgentThoughtSets s = thought_sets(b, AgentBlocks({2, 1, 3}));
    CHECK(oracle::partition_holds(s, 0, 1));
    CHECK(oracle::partition_holds(s, 2, 0));
  }
}

TEST_CASE("match_columns") {
  SUBCASE("identical supports") {
    const IndexMatrix t = fig_pattern();
    const PermutationMap p = match_columns(t, t);
    CHECK(p.target == std::vector<int>{0, 1, 2});
    CHECK(p.score == std::vector<double>{1, 1, 2});
  }
  SUBCASE("reversed columns") {
    IndexMatrix t(3, 3);
    t << 1, 1, 0, 0, 1, 1, 0, 0, 1;
    const IndexMatrix rev = t.rowwise().reverse();
    CHECK(match_columns(rev, t).target == std::vector<int>{2, 1, 0});
  }
  SUBCASE("random four-column instances match exhaustive search") {
    SeededRng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const IndexMatrix t = oracle::random_pattern(rng, 5, 4, 0.5);
      const IndexMatrix e = oracle::random_pattern(rng, 5, 4, 0.5);
      const PermutationMap p = match_columns(e, t);
      REQUIRE(p.is_bijection());
      int total = 0;
      for (int i = 0; i < 4; ++i) total += oracle::overlap(e, i, t, p.target[i]);
      CHECK(total == oracle::brute_force_best_overlap(e, t));
    }
  }
}
