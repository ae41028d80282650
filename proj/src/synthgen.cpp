#include "thoughtcomm/synthgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>

namespace thoughtcomm {

AgentBlocks::AgentBlocks(std::vector<int> block_dims) : dims_(std::move(block_dims)) {
  if (dims_.empty()) throw InvalidArgument("AgentBlocks: at least one agent required");
  offsets_.push_back(0);
  for (int d : dims_) {
    if (d < 1) throw InvalidArgument("AgentBlocks: every block must be non-empty");
    offsets_.push_back(offsets_.back() + d);
  }
}

int AgentBlocks::agent_of_row(int row) const {
  if (row < 0 || row >= n_h()) throw InvalidArgument("AgentBlocks: row out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), row);
  return static_cast<int>(it - offsets_.begin()) - 1;
}

void SupportMatrix::validate() const {
  if (entries.rows() != blocks.n_h()) throw InvalidArgument("SupportMatrix: rows do not match blocks");
  for (Eigen::Index j = 0; j < entries.cols(); ++j) {
    if (entries.col(j).maxCoeff() == 0)
      throw InvalidArgument("SupportMatrix: thought " + std::to_string(j) + " influences no state");
  }
  for (int k = 0; k < blocks.n_agents(); ++k) {
    if (entries.middleRows(blocks.begin(k), blocks.dim(k)).maxCoeff() == 0)
      throw InvalidArgument("SupportMatrix: agent " + std::to_string(k) + " holds no thought");
  }
}

double default_p_row(int block_dim) { return block_dim > 4 ? 0.7 : 1.0; }

int structural_rank(const IndexMatrix& pattern) {
  const int rows = static_cast<int>(pattern.rows());
  const int cols = static_cast<int>(pattern.cols());
  std::vector<int> row_match(rows, -1);
  std::vector<char> seen;
  std::function<bool(int)> augment = [&](int col) {
    for (int r = 0; r < rows; ++r) {
      if (pattern(r, col) == 0 || seen[r]) continue;
      seen[r] = 1;
      if (row_match[r] < 0 || augment(row_match[r])) {
        row_match[r] = col;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int c = 0; c < cols; ++c) {
    seen.assign(rows, 0);
    if (augment(c)) ++matched;
  }
  return matched;
}

SupportMatrix sample_support(const std::vector<int>& block_dims, const std::vector<ThoughtGroup>& groups,
                             SeededRng& rng, const SupportOptions& options) {
  AgentBlocks blocks(block_dims);
  const int n_agents = blocks.n_agents();

  int n_z = 0;
  std::vector<char> covered(n_agents, 0);
  for (const auto& g : groups) {
    if (g.agents.empty()) throw InvalidArgument("sample_support: empty agent subset");
    if (g.count < 0) throw InvalidArgument("sample_support: negative thought count");
    std::set<int> unique(g.agents.begin(), g.agents.end());
    if (unique.size() != g.agents.size()) throw InvalidArgument("sample_support: repeated agent in subset");
    for (int a : g.agents) {
      if (a < 0 || a >= n_agents) throw InvalidArgument("sample_support: agent index out of range");
      if (g.count > 0) covered[a] = 1;
    }
    n_z += g.count;
  }
  if (n_z == 0) throw InvalidArgument("sample_support: at least one thought required");
  for (int a = 0; a < n_agents; ++a) {
    if (!covered[a]) throw InvalidArgument("sample_support: agent " + std::to_string(a) + " would hold no thought");
  }
  if (options.p_row && !(*options.p_row > 0 && *options.p_row <= 1))
    throw InvalidArgument("sample_support: p_row must lie in (0, 1]");

  SupportMatrix out;
  out.blocks = blocks;
  const bool need_rank = options.require_structural_rank && blocks.n_h() >= n_z;
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    out.entries = IndexMatrix::Zero(blocks.n_h(), n_z);
    out.column_group.clear();
    int col = 0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      std::vector<int> members = groups[gi].agents;
      std::sort(members.begin(), members.end());
      for (int c = 0; c < groups[gi].count; ++c, ++col) {
        out.column_group.push_back(static_cast<int>(gi));
        for (int a : members) {
          const double p = options.p_row.value_or(default_p_row(blocks.dim(a)));
          int set_rows = 0;
          for (int r = blocks.begin(a); r < blocks.end(a); ++r) {
            if (p >= 1.0 || rng.uniform() < p) {
              out.entries(r, col) = 1;
              ++set_rows;
            }
          }
          if (set_rows == 0) out.entries(blocks.begin(a) + static_cast<int>(rng.uniform_index(blocks.dim(a))), col) = 1;
        }
      }
    }
    if (!need_rank || structural_rank(out.entries) == n_z) {
      out.validate();
      return out;
    }
  }
  throw InvalidArgument("sample_support: no structurally full-rank pattern after 100 attempts");
}

Vector MixingFunction::apply(const Vector& z) const {
  Vector u(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) u(i) = elementwise_map(z(i), amp_in(i));
  Vector h = weight * u;
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = elementwise_map(h(i), amp_out(i));
  return h;
}

Matrix MixingFunction::apply_rows(const Matrix& latents) const {
  if (latents.cols() != n_z()) throw InvalidArgument("MixingFunction: latent width mismatch");
  Matrix out(latents.rows(), n_h());
  for (Eigen::Index r = 0; r < latents.rows(); ++r) out.row(r) = apply(latents.row(r).transpose()).transpose();
  return out;
}

Matrix MixingFunction::jacobian(const Vector& z) const {
  Vector u(z.size());
  Vector du(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    u(i) = elementwise_map(z(i), amp_in(i));
    du(i) = elementwise_map_derivative(z(i), amp_in(i));
  }
  const Vector pre = weight * u;
  Vector dout(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) dout(i) = elementwise_map_derivative(pre(i), amp_out(i));
  return dout.asDiagonal() * weight * du.asDiagonal();
}

namespace {

double column_space_condition(const Matrix& w) {
  Eigen::JacobiSVD<Matrix> svd(w);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

}  // namespace

MixingFunction build_mixing(const SupportMatrix& support, SeededRng& rng, const MixingOptions& options) {
  if (!(options.cond_max > 1)) throw InvalidArgument("build_mixing: cond_max must exceed 1");
  if (!(options.max_amplitude >= 0 && options.max_amplitude <= 0.9))
    throw InvalidArgument("build_mixing: amplitude bound must lie in [0, 0.9]");
  support.validate();
  if (support.n_h() < support.n_z()) throw InvalidArgument("build_mixing: n_h < n_z cannot be left-invertible");

  MixingFunction f;
  f.mask = support;
  f.amp_in.resize(support.n_z());
  f.amp_out.resize(support.n_h());
  for (auto& a : f.amp_in) a = options.max_amplitude > 0 ? rng.uniform(-options.max_amplitude, options.max_amplitude) : 0.0;
  for (auto& a : f.amp_out) a = options.max_amplitude > 0 ? rng.uniform(-options.max_amplitude, options.max_amplitude) : 0.0;

  // Magnitudes in [0.5, 1.5] with random sign keep every on-support entry
  // bounded away from zero.
  double best = std::numeric_limits<double>::infinity();
  bool accepted = false;
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    Matrix w = Matrix::Zero(support.n_h(), support.n_z());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        if (support.entries(i, j) == 0) continue;
        const double mag = rng.uniform(0.5, 1.5);
        w(i, j) = rng.uniform() < 0.5 ? -mag : mag;
      }
    }
    const double cond = column_space_condition(w);
    best = std::min(best, cond);
    if (cond <= options.cond_max) {
      f.weight = std::move(w);
      f.condition_number = cond;
      accepted = true;
      break;
    }
  }
  if (!accepted) {
    throw GenerationFailed("build_mixing: no masked weight with condition number <= " +
                               std::to_string(options.cond_max) + " (best " + std::to_string(best) + ")",
                           best);
  }

  // Finite-difference audit of the end-to-end support at 5 Laplace points.
  const Matrix probes = sample_laplace(rng, 5, support.n_z(), 1.0);
  bool generic_hit = false;
  for (Eigen::Index p = 0; p < probes.rows(); ++p) {
    const Matrix jac = finite_diff_jacobian<double>([&](const Vector& z) { return f.apply(z); },
                                                    probes.row(p).transpose(), 1e-6);
    bool all_on = true;
    for (Eigen::Index i = 0; i < jac.rows(); ++i) {
      for (Eigen::Index j = 0; j < jac.cols(); ++j) {
        if (support.entries(i, j) == 0 && std::abs(jac(i, j)) >= 1e-7)
          throw GenerationFailed("build_mixing: Jacobian leaks outside the support mask", f.condition_number);
        if (support.entries(i, j) != 0 && std::abs(jac(i, j)) <= 1e-4) all_on = false;
      }
    }
    generic_hit = generic_hit || all_on;
  }
  if (!generic_hit) throw GenerationFailed("build_mixing: support not attained at any probe point", f.condition_number);
  return f;
}

Dataset generate_dataset(const MixingFunction& mixing, Eigen::Index n_samples, SeededRng& rng) {
  if (n_samples < 1) throw InvalidArgument("generate_dataset: n_samples must be >= 1");
  Dataset d;
  d.seed = rng.seed();
  d.latents = sample_laplace(rng, n_samples, mixing.n_z(), 1.0);
  d.states = mixing.apply_rows(d.latents);
  d.blocks = mixing.mask.blocks;
  d.support = mixing.mask;
  return d;
}

void write_f32_matrix(const Matrix& m, const std::filesystem::path& file) {
  std::vector<char> bytes(static_cast<std::size_t>(m.size()) * 4);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, k += 4) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j)));
      for (int b = 0; b < 4; ++b) bytes[k + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Matrix read_f32_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != static_cast<std::size_t>(rows * cols * 4))
    throw InvalidArgument(file.string() + ": size does not match meta.json shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j, k += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[k + b]) << (8 * b);
      m(i, j) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return m;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_f32_matrix(data.states, dir / "states.bin");
  write_f32_matrix(data.latents, dir / "latents.bin");

  nlohmann::ordered_json meta;
  meta["format_version"] = kDatasetFormatVersion;
  meta["n_samples"] = data.n_samples();
  meta["n_h"] = data.states.cols();
  meta["n_z"] = data.latents.cols();
  meta["blocks"] = data.blocks.dims();
  std::vector<int> support;
  for (Eigen::Index i = 0; i < data.support.entries.rows(); ++i)
    for (Eigen::Index j = 0; j < data.support.entries.cols(); ++j) support.push_back(data.support.entries(i, j));
  meta["support"] = support;
  meta["column_group"] = data.support.column_group;
  meta["seed"] = data.seed;
  meta["generator_config"] =
      data.generator_config.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(data.generator_config);
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw InvalidArgument("missing " + (dir / "meta.json").string());
  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("meta.json: ") + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != kDatasetFormatVersion)
      throw InvalidArgument("meta.json: unsupported format version");
    Dataset d;
    const auto n = meta.at("n_samples").get<Eigen::Index>();
    const auto n_h = meta.at("n_h").get<Eigen::Index>();
    const auto n_z = meta.at("n_z").get<Eigen::Index>();
    d.blocks = AgentBlocks(meta.at("blocks").get<std::vector<int>>());
    if (d.blocks.n_h() != n_h) throw InvalidArgument("meta.json: blocks do not cover n_h");
    const auto support = meta.at("support").get<std::vector<int>>();
    if (static_cast<Eigen::Index>(support.size()) != n_h * n_z) throw InvalidArgument("meta.json: support size mismatch");
    d.support.entries.resize(n_h, n_z);
    for (Eigen::Index i = 0; i < n_h; ++i)
      for (Eigen::Index j = 0; j < n_z; ++j) d.support.entries(i, j) = support[i * n_z + j] != 0;
    d.support.blocks = d.blocks;
    if (meta.contains("column_group")) d.support.column_group = meta["column_group"].get<std::vector<int>>();
    d.seed = meta.at("seed").get<std::uint64_t>();
    d.generator_config = meta.at("generator_config").dump();
    d.states = read_f32_matrix(dir / "states.bin", n, n_h);
    d.latents = read_f32_matrix(dir / "latents.bin", n, n_z);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("meta.json: ") + e.what());
  }
}

}  // namespace thoughtcomm
