#pragma once

// Dense numerics shared by every other module: error types, a portable
// seeded generator, Laplace sampling, Adam, and finite-difference Jacobians.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace thoughtcomm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// Error taxonomy. CLI maps InvalidArgument to exit code 2 and NumericError
// (and subclasses) to exit code 3.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// xoshiro256** seeded through splitmix64.
///
/// Seeding: s[i] = splitmix64 output i (i = 0..3) starting from `seed`.
/// uniform(): (next() >> 11) * 2^-53, in [0, 1).
/// uniform_open(): ((next() >> 11) + 0.5) * 2^-53, in (0, 1).
/// uniform_index(n): high 64 bits of the 128-bit product next() * n.
/// normal(): Box-Muller, one uniform_open() pair per draw, cosine branch.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    ++position_;
    return result;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Fisher-Yates, last index downward.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent generator; consumes one draw.
  SeededRng split() { return SeededRng(next()); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t state_[4];
};

/// Inverse-CDF Laplace draw: with u ~ U(0,1) open and v = u - 1/2,
/// x = -scale * sign(v) * log(1 - 2|v|). Filled column by column.
template <typename Scalar = double>
MatrixX<Scalar> sample_laplace(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, Scalar scale) {
  if (rows < 1 || cols < 1) throw InvalidArgument("sample_laplace: rows and cols must be >= 1");
  if (!(scale > 0)) throw InvalidArgument("sample_laplace: scale must be positive");
  MatrixX<Scalar> out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double v = rng.uniform_open() - 0.5;
      const double mag = -std::log(1.0 - 2.0 * std::abs(v));
      out(i, j) = static_cast<Scalar>(v < 0 ? -scale * mag : scale * mag);
    }
  }
  return out;
}

template <typename Scalar = double>
MatrixX<Scalar> sample_normal(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, Scalar stddev = 1) {
  MatrixX<Scalar> out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = static_cast<Scalar>(stddev * rng.normal());
  return out;
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar = double>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<MatrixX<Scalar>> m;
  std::vector<MatrixX<Scalar>> v;

  AdamState() = default;
  explicit AdamState(AdamHyper h) : hyper(h) {}
};

template <typename Scalar>
using ParamRef = Eigen::Ref<MatrixX<Scalar>>;
template <typename Scalar>
using GradRef = Eigen::Ref<const MatrixX<Scalar>>;

/// One bias-corrected Adam update. Moment buffers are allocated lazily on
/// the first call and must keep their shapes afterwards.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, std::span<ParamRef<Scalar>> params, std::span<const GradRef<Scalar>> grads) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
      throw InvalidArgument("adam_step: params/grads shape mismatch at index " + std::to_string(i));
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
      state.v.push_back(MatrixX<Scalar>::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].rows() != params[i].rows() || state.m[i].cols() != params[i].cols())
      throw InvalidArgument("adam_step: moment shape mismatch at index " + std::to_string(i));
  }

  ++state.step;
  const auto& h = state.hyper;
  const Scalar b1 = static_cast<Scalar>(h.beta1);
  const Scalar b2 = static_cast<Scalar>(h.beta2);
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(h.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(h.beta2, static_cast<double>(state.step)));
  const Scalar lr = static_cast<Scalar>(h.lr);
  const Scalar eps = static_cast<Scalar>(h.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
}

/// Central differences: column j is (fn(x + h e_j) - fn(x - h e_j)) / 2h.
template <typename Scalar, typename Fn>
MatrixX<Scalar> finite_diff_jacobian(Fn&& fn, const VectorX<Scalar>& point, Scalar step) {
  if (!(step > 0)) throw InvalidArgument("finite_diff_jacobian: step must be positive");
  VectorX<Scalar> x = point;
  MatrixX<Scalar> jac;
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    x(j) = point(j) + step;
    const VectorX<Scalar> fp = fn(x);
    x(j) = point(j) - step;
    const VectorX<Scalar> fm = fn(x);
    x(j) = point(j);
    if (!fp.allFinite() || !fm.allFinite()) throw NumericError("finite_diff_jacobian: non-finite function value");
    if (j == 0) jac.resize(fp.size(), point.size());
    jac.col(j) = (fp - fm) / (Scalar(2) * step);
  }
  return jac;
}

/// Population mean and variance per column.
template <typename Derived>
auto column_variance(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const auto mean = m.colwise().mean();
  return ((m.rowwise() - mean).cwiseAbs2().colwise().sum() / static_cast<Scalar>(m.rows())).eval();
}

}  // namespace thoughtcomm
