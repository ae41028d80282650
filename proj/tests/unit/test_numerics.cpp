#include "thoughtcomm/numerics.hpp"

#include <doctest.h>

using namespace thoughtcomm;

TEST_CASE("rng is reproducible and split streams differ") {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  SeededRng c(42);
  SeededRng child = c.split();
  SeededRng d(42);
  d.split();
  CHECK(child.next() != c.next());
  d.next();
  CHECK(c.next() == d.next());
}

TEST_CASE("uniform draws stay in range") {
  SeededRng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const double o = rng.uniform_open();
    CHECK((o > 0.0 && o < 1.0));
    CHECK(rng.uniform_index(7) < 7u);
  }
}

TEST_CASE("laplace sampling") {
  SUBCASE("same seed gives the same value") {
    SeededRng r1(7), r2(7);
    CHECK(sample_laplace(r1, 1, 1, 1.0)(0, 0) == sample_laplace(r2, 1, 1, 1.0)(0, 0));
  }
  SUBCASE("variance is 2 b^2") {
    SeededRng rng(7);
    const Matrix x = sample_laplace(rng, 100000, 1, 1.0);
    CHECK(column_variance(x)(0) == doctest::Approx(2.0).epsilon(0.05));
  }
  SUBCASE("mean is near zero") {
    SeededRng rng(7);
    const Matrix x = sample_laplace(rng, 100000, 1, 0.5);
    // sd of the mean is sqrt(2 * 0.25 / 1e5) ~ 2.2e-3
    CHECK(std::abs(x.mean()) < 0.02);
  }
  SUBCASE("non-positive scale is rejected") {
    SeededRng rng(7);
    CHECK_THROWS_AS(sample_laplace(rng, 2, 2, 0.0), InvalidArgument);
  }
}

namespace {

void step(AdamState<double>& s, Matrix& p, const Matrix& g) {
  std::vector<ParamRef<double>> ps{p};
  std::vector<GradRef<double>> gs{g};
  adam_step<double>(s, ps, gs);
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    AdamState<double> s(AdamHyper{0.1});
    Matrix p = Matrix::Constant(2, 3, 1.5);
    step(s, p, Matrix::Zero(2, 3));
    CHECK(p == Matrix::Constant(2, 3, 1.5));
    CHECK(s.step == 1);
  }
  SUBCASE("first step on a scalar moves by about lr") {
    AdamState<double> s(AdamHyper{0.1});
    Matrix p = Matrix::Constant(1, 1, 2.0);
    step(s, p, Matrix::Constant(1, 1, 1.0));
    // m_hat = 1, v_hat = 1, update = 0.1 / (1 + 1e-8)
    CHECK(p(0, 0) == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("second step follows the recurrence") {
    AdamState<double> s(AdamHyper{0.05, 0.8, 0.9, 1e-8});
    Matrix p = Matrix::Constant(1, 1, 0.0);
    step(s, p, Matrix::Constant(1, 1, 2.0));
    step(s, p, Matrix::Constant(1, 1, -1.0));
    const double m1 = 0.2 * 2.0, v1 = 0.1 * 4.0;
    const double m2 = 0.8 * m1 + 0.2 * -1.0, v2 = 0.9 * v1 + 0.1 * 1.0;
    const double first = -0.05 * (m1 / 0.2) / (std::sqrt(v1 / 0.1) + 1e-8);
    const double second = -0.05 * (m2 / (1 - 0.64)) / (std::sqrt(v2 / (1 - 0.81)) + 1e-8);
    CHECK(p(0, 0) == doctest::Approx(first + second).epsilon(1e-12));
  }
  SUBCASE("resuming from saved state equals a continuous run") {
    AdamState<double> a(AdamHyper{0.01});
    Matrix pa = Matrix::Constant(2, 2, 0.3);
    const Matrix g1 = Matrix::Constant(2, 2, 0.7), g2 = Matrix::Constant(2, 2, -0.2);
    step(a, pa, g1);
    AdamState<double> saved = a;
    Matrix pb = pa;
    step(a, pa, g2);
    step(saved, pb, g2);
    CHECK(pa == pb);
    CHECK(a.step == 2);
  }
  SUBCASE("shape mismatch throws") {
    AdamState<double> s;
    Matrix p = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(step(s, p, Matrix::Zero(2, 3)), InvalidArgument);
  }
}

TEST_CASE("finite difference jacobian") {
  const Vector x = (Vector(3) << 0.3, -1.2, 2.0).finished();
  SUBCASE("identity") {
    const Matrix j = finite_diff_jacobian<double>([](const Vector& v) { return v; }, x, 1e-5);
    CHECK((j - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("linear map") {
    SeededRng rng(1);
    const Matrix a = sample_normal(rng, 4, 3);
    const Matrix j = finite_diff_jacobian<double>([&](const Vector& v) { return Vector(a * v); }, x, 1e-4);
    CHECK((j - a).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("tanh at zero") {
    const Matrix j = finite_diff_jacobian<double>(
        [](const Vector& v) { return Vector(v.array().tanh()); }, Vector::Zero(3), 1e-5);
    CHECK((j - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-8);
  }
}
