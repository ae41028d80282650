#include "thoughtcomm/routing.hpp"

#include <doctest.h>

using namespace thoughtcomm;

namespace {

WeightTable ones() {
  WeightTable w;
  w.weights = {{1, 1.0}, {2, 1.0}};
  return w;
}

}  // namespace

TEST_CASE("route") {
  const AgentThoughtSets sets{{{0, 2}, {1, 2}}};
  const AgreementVector alpha{{1, 1, 2}};
  const Vector z = (Vector(3) << 0.5, -0.2, 0.9).finished();

  SUBCASE("shared thought first, then private") {
    const RoutedThoughts r = route(z, sets, alpha, ones(), 0);
    CHECK(r.values == (Vector(2) << 0.9, 0.5).finished());
    CHECK(r.levels == std::vector<int>{2, 1});
    CHECK(r.sources == std::vector<int>{2, 0});
  }
  SUBCASE("unit weights and equal levels copy the selection in index order") {
    const AgentThoughtSets all{{{0, 1, 2}}};
    const RoutedThoughts r = route(z, all, AgreementVector{{1, 1, 1}}, ones(), 0);
    CHECK(r.values == z);
  }
  SUBCASE("zero weight zeroes its level") {
    WeightTable w = ones();
    w.weights[1] = 0.0;
    const RoutedThoughts r = route(z, sets, alpha, w, 1);
    CHECK(r.values(0) == 0.9);
    CHECK(r.values(1) == 0.0);
  }
  SUBCASE("proportional weights") {
    const RoutedThoughts r = route(z, sets, alpha, WeightTable::proportional(2), 1);
    CHECK(r.values == (Vector(2) << 0.9, -0.1).finished());
  }
  SUBCASE("length equals the set size") {
    for (int k = 0; k < 2; ++k) CHECK(route(z, sets, alpha, ones(), k).size() == static_cast<int>(sets.sets[k].size()));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(route(z, sets, alpha, ones(), 2), InvalidArgument);
    CHECK_THROWS_AS(route(z, sets, AgreementVector{{1, 1}}, ones(), 0), InvalidArgument);
    WeightTable partial;
    partial.weights = {{1, 1.0}};
    CHECK_THROWS_AS(route(z, sets, alpha, partial, 0), InvalidArgument);
  }
}

TEST_CASE("weight table") {
  const WeightTable p = WeightTable::proportional(4);
  CHECK(p.at(1) == 0.25);
  CHECK(p.at(4) == 1.0);
  CHECK_NOTHROW(p.validate(4));
  CHECK_THROWS_AS(p.validate(5), InvalidArgument);
  WeightTable bad = p;
  bad.weights[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.validate(4), InvalidArgument);
  CHECK(weights_from_json(weights_to_json(p)).weights == p.weights);
  CHECK_THROWS_AS(weights_from_json(nlohmann::ordered_json{{"one", 1.0}}), InvalidArgument);
}

TEST_CASE("make_prefix") {
  RoutedThoughts r;
  r.values = (Vector(2) << 0.9, 0.5).finished();
  SUBCASE("zero adapter") {
    const Matrix p = make_prefix(Adapter::zeros(3, 2, 4), r);
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 4);
    CHECK(p.isZero());
  }
  SUBCASE("single-row prefix") {
    const Matrix p = make_prefix(Adapter::zeros(3, 1, 5), r);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 5);
  }
  SUBCASE("identity adapter returns the padded values") {
    Adapter a = Adapter::zeros(3, 1, 3);
    a.weight = Matrix::Identity(3, 3);
    CHECK(make_prefix(a, r) == (Matrix(1, 3) << 0.9, 0.5, 0.0).finished());
  }
  SUBCASE("row-major reshape") {
    Adapter a = Adapter::zeros(2, 2, 2);
    a.weight << 1, 0, 0, 1, 2, 0, 0, 2;
    const Matrix p = make_prefix(a, r);
    CHECK(p == (Matrix(2, 2) << 0.9, 0.5, 1.8, 1.0).finished());
  }
  SUBCASE("overflow") { CHECK_THROWS_AS(make_prefix(Adapter::zeros(1, 1, 2), r), InvalidArgument); }
  SUBCASE("adapter json round trip") {
    Adapter a = Adapter::zeros(2, 2, 3);
    a.weight.setRandom();
    const Adapter b = adapter_from_json(adapter_to_json(a));
    CHECK(b.weight == a.weight);
    CHECK(b.prefix_length == 2);
    CHECK(b.embedding_width == 3);
  }
}
