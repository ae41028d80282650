#include "thoughtcomm/eval.hpp"

#include "thoughtcomm/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace thoughtcomm {

namespace {

// Columns with standard deviation below this are treated as constant.
constexpr double kConstantColumn = 1e-12;
// Relative pivot size below which the OLS design counts as rank deficient.
constexpr double kRankTolerance = 1e-10;

Matrix rank_transform(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return m(a, j) < m(b, j); });
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t k = i;
      while (k + 1 < idx.size() && m(idx[k + 1], j) == m(idx[i], j)) ++k;
      const double avg = 0.5 * static_cast<double>(i + k);
      for (std::size_t t = i; t <= k; ++t) out(idx[t], j) = avg;
      i = k + 1;
    }
  }
  return out;
}

// Z-scores columns in place; returns indices of constant columns (set to 0).
std::vector<int> zscore(Matrix& m) {
  std::vector<int> constant;
  const double n = static_cast<double>(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    m.col(j).array() -= m.col(j).mean();
    const double sd = std::sqrt(m.col(j).squaredNorm() / n);
    if (sd < kConstantColumn) {
      m.col(j).setZero();
      constant.push_back(static_cast<int>(j));
    } else {
      m.col(j) /= sd;
    }
  }
  return constant;
}

Json permutation_to_json(const PermutationMap& p) { return Json{{"target", p.target}, {"score", p.score}}; }

PermutationMap permutation_from_json(const Json& j) {
  PermutationMap p;
  p.target = j.at("target").get<std::vector<int>>();
  p.score = j.at("score").get<std::vector<double>>();
  return p;
}

}  // namespace

MccResult mcc(const Matrix& z_hat, const Matrix& z_true, Correlation kind) {
  if (z_hat.rows() != z_true.rows()) throw InvalidArgument("mcc: row counts differ");
  if (z_hat.rows() < 2) throw InvalidArgument("mcc: need at least two rows");
  if (z_hat.cols() < 1 || z_true.cols() < 1) throw InvalidArgument("mcc: empty latent matrix");
  const Eigen::Index p = z_hat.cols();
  const Eigen::Index q = z_true.cols();
  const Eigen::Index n = std::max(p, q);

  MccResult out;
  out.padded = p != q;
  Matrix a = Matrix::Zero(z_hat.rows(), n);
  Matrix b = Matrix::Zero(z_true.rows(), n);
  a.leftCols(p) = kind == Correlation::spearman ? rank_transform(z_hat) : z_hat;
  b.leftCols(q) = kind == Correlation::spearman ? rank_transform(z_true) : z_true;
  for (int c : zscore(a))
    if (c < p) out.zero_variance_estimated.push_back(c);
  for (int c : zscore(b))
    if (c < q) out.zero_variance_true.push_back(c);

  out.abs_correlation = ((a.transpose() * b) / static_cast<double>(z_hat.rows())).cwiseAbs().cwiseMin(1.0);
  out.permutation = hungarian(Matrix::Ones(n, n) - out.abs_correlation);
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = out.permutation.target[i];
    out.permutation.score[i] = out.abs_correlation(i, t);
    if (t < q) sum += out.abs_correlation(i, t);
  }
  out.value = sum / static_cast<double>(q);
  return out;
}

Matrix select_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= m.cols()) throw InvalidArgument("select_columns: index out of range");
    out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  }
  return out;
}

R2Result block_r2_detailed(const Matrix& predictors, const Matrix& targets) {
  if (predictors.rows() != targets.rows()) throw InvalidArgument("block_r2: row counts differ");
  const Eigen::Index n = predictors.rows();
  const Eigen::Index n_test = static_cast<Eigen::Index>(std::floor(kR2TestFraction * static_cast<double>(n)));
  const Eigen::Index n_fit = n - n_test;
  const Eigen::Index width = predictors.cols() + 1;
  if (n_fit < width + 2 || n_test < 2) throw InvalidArgument("block_r2: too few rows for the predictor count");
  if (targets.cols() < 1) throw InvalidArgument("block_r2: no target columns");

  Matrix design(n, width);
  design.col(0).setOnes();
  design.rightCols(predictors.cols()) = predictors;
  const Matrix x_fit = design.topRows(n_fit);
  const Matrix y_fit = targets.topRows(n_fit);

  R2Result out;
  Matrix coef;
  Eigen::ColPivHouseholderQR<Matrix> qr(x_fit);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < width) {
    out.ridge_fallback = true;
    Matrix gram = x_fit.transpose() * x_fit;
    gram.diagonal().array() += kRidgeFallback;
    coef = gram.ldlt().solve(x_fit.transpose() * y_fit);
  } else {
    coef = qr.solve(y_fit);
  }

  const Matrix y_test = targets.bottomRows(n_test);
  const Matrix resid = y_test - design.bottomRows(n_test) * coef;
  double total = 0;
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    const double ss_res = resid.col(j).squaredNorm();
    const double ss_tot = (y_test.col(j).array() - y_test.col(j).mean()).square().sum();
    total += ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  }
  out.value = total / static_cast<double>(targets.cols());
  return out;
}

double support_f1(const IndexMatrix& estimated, const IndexMatrix& truth, const PermutationMap& perm) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols() || perm.size() != truth.cols())
    throw InvalidArgument("support_f1: shapes do not align");
  if (!perm.is_bijection()) throw InvalidArgument("support_f1: permutation is not a bijection");
  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < estimated.cols(); ++i) {
    const Eigen::Index t = perm.target[i];
    for (Eigen::Index r = 0; r < truth.rows(); ++r) {
      const bool e = estimated(r, i) != 0;
      const bool g = truth(r, t) != 0;
      tp += e && g;
      fp += e && !g;
      fn += !e && g;
    }
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::string group_label(const std::vector<int>& agents) {
  std::string label = agents.size() == 1 ? "private" : "shared";
  for (int a : agents) label += "-" + std::to_string(a);
  return label;
}

std::vector<LatentGroup> groups_from_spec(const std::vector<std::vector<int>>& subsets) {
  std::vector<LatentGroup> out;
  for (auto s : subsets) {
    std::sort(s.begin(), s.end());
    if (s.empty()) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const LatentGroup& g) { return g.agents == s; });
    if (!seen) out.push_back({group_label(s), s});
  }
  return out;
}

BlockR2 block_r2_matrix(const Matrix& z_hat, const std::vector<std::vector<int>>& estimated_holders,
                        const Matrix& z_true, const std::vector<std::vector<int>>& true_holders) {
  if (static_cast<Eigen::Index>(estimated_holders.size()) != z_hat.cols() ||
      static_cast<Eigen::Index>(true_holders.size()) != z_true.cols())
    throw InvalidArgument("block_r2_matrix: holder lists do not match latent widths");
  const auto groups = groups_from_spec(true_holders);
  BlockR2 out;
  const auto g = static_cast<Eigen::Index>(groups.size());
  out.r2 = Matrix::Zero(g, g);
  out.estimated_columns.resize(groups.size());
  out.true_columns.resize(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    out.labels.push_back(groups[k].label);
    for (std::size_t j = 0; j < true_holders.size(); ++j) {
      auto s = true_holders[j];
      std::sort(s.begin(), s.end());
      if (s == groups[k].agents) out.true_columns[k].push_back(static_cast<int>(j));
    }
    for (std::size_t j = 0; j < estimated_holders.size(); ++j) {
      auto s = estimated_holders[j];
      std::sort(s.begin(), s.end());
      if (s == groups[k].agents) out.estimated_columns[k].push_back(static_cast<int>(j));
    }
  }
  for (Eigen::Index e = 0; e < g; ++e) {
    const Matrix pred = select_columns(z_hat, out.estimated_columns[e]);
    for (Eigen::Index t = 0; t < g; ++t) {
      const R2Result r = block_r2_detailed(pred, select_columns(z_true, out.true_columns[t]));
      out.r2(e, t) = r.value;
      out.ridge_fallback = out.ridge_fallback || r.ridge_fallback;
    }
  }
  return out;
}

double mean_diagonal(const Matrix& m) { return m.rows() > 0 ? m.diagonal().mean() : 0.0; }

double mean_off_diagonal(const Matrix& m) {
  const Eigen::Index n = m.rows();
  if (n < 2) return 0.0;
  return (m.sum() - m.diagonal().sum()) / static_cast<double>(n * n - n);
}

void validate_report(const EvalReport& r) {
  if (!std::isfinite(r.mcc) || r.mcc < 0 || r.mcc > 1) throw ReportInvalid("report: mcc outside [0, 1]");
  if (!std::isfinite(r.support_f1) || r.support_f1 < 0 || r.support_f1 > 1)
    throw ReportInvalid("report: support_f1 outside [0, 1]");
  if (!r.blocks.r2.allFinite() || (r.blocks.r2.size() > 0 && r.blocks.r2.maxCoeff() > 1 + 1e-12))
    throw ReportInvalid("report: block R^2 entry above 1 or non-finite");
  if (!r.mcc_permutation.is_bijection() || !r.support_permutation.is_bijection())
    throw ReportInvalid("report: permutation is not a bijection");
}

EvalReport assemble_report(ReportPieces pieces) {
  EvalReport r;
  r.mcc = pieces.mcc.value;
  r.mcc_permutation = std::move(pieces.mcc.permutation);
  if (pieces.mcc.padded) r.flags.push_back("mcc_padded");
  if (!pieces.mcc.zero_variance_estimated.empty()) r.flags.push_back("zero_variance_estimate");
  if (!pieces.mcc.zero_variance_true.empty()) r.flags.push_back("zero_variance_truth");
  r.blocks = std::move(pieces.blocks);
  if (r.blocks.ridge_fallback) r.flags.push_back("r2_ridge_fallback");
  r.support = std::move(pieces.support);
  if (!r.support.inactive_columns().empty()) r.flags.push_back("inactive_thoughts");
  r.support_f1 = pieces.support_f1;
  r.support_permutation = std::move(pieces.support_permutation);
  r.config = std::move(pieces.config);
  r.training = std::move(pieces.training);
  r.provenance = std::move(pieces.provenance);
  validate_report(r);
  return r;
}

Json report_to_json(const EvalReport& r) {
  Json j;
  j["format_version"] = kReportFormatVersion;
  j["mcc"] = {{"value", r.mcc}, {"permutation", permutation_to_json(r.mcc_permutation)}};
  j["flags"] = r.flags;
  Json blocks;
  blocks["labels"] = r.blocks.labels;
  blocks["r2"] = matrix_to_json(r.blocks.r2);
  blocks["estimated_columns"] = r.blocks.estimated_columns;
  blocks["true_columns"] = r.blocks.true_columns;
  blocks["ridge_fallback"] = r.blocks.ridge_fallback;
  blocks["mean_diagonal"] = mean_diagonal(r.blocks.r2);
  blocks["mean_off_diagonal"] = mean_off_diagonal(r.blocks.r2);
  j["r2_blocks"] = std::move(blocks);
  Json support;
  support["tau"] = r.support.tau;
  support["sample_count"] = r.support.sample_count;
  support["mean_abs_jacobian"] = matrix_to_json(r.support.mean_abs_jacobian);
  support["estimate"] = matrix_to_json(r.support.support);
  support["inactive_columns"] = r.support.inactive_columns();
  support["f1"] = r.support_f1;
  support["permutation"] = permutation_to_json(r.support_permutation);
  j["support"] = std::move(support);
  j["config"] = r.config;
  j["training"] = r.training;
  j["provenance"] = r.provenance;
  return j;
}

EvalReport report_from_json(const Json& j) {
  try {
    if (j.at("format_version").get<int>() != kReportFormatVersion) throw InvalidArgument("report: unsupported version");
    EvalReport r;
    r.mcc = j.at("mcc").at("value").get<double>();
    r.mcc_permutation = permutation_from_json(j.at("mcc").at("permutation"));
    r.flags = j.at("flags").get<std::vector<std::string>>();
    const auto& b = j.at("r2_blocks");
    r.blocks.labels = b.at("labels").get<std::vector<std::string>>();
    r.blocks.r2 = matrix_from_json<Matrix>(b.at("r2"));
    r.blocks.estimated_columns = b.at("estimated_columns").get<std::vector<std::vector<int>>>();
    r.blocks.true_columns = b.at("true_columns").get<std::vector<std::vector<int>>>();
    r.blocks.ridge_fallback = b.at("ridge_fallback").get<bool>();
    const auto& s = j.at("support");
    r.support.tau = s.at("tau").get<double>();
    r.support.sample_count = s.at("sample_count").get<int>();
    r.support.mean_abs_jacobian = matrix_from_json<Matrix>(s.at("mean_abs_jacobian"));
    r.support.support = matrix_from_json<IndexMatrix>(s.at("estimate"));
    r.support_f1 = s.at("f1").get<double>();
    r.support_permutation = permutation_from_json(s.at("permutation"));
    r.config = j.at("config");
    r.training = j.at("training");
    r.provenance = j.at("provenance");
    validate_report(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("report: ") + e.what());
  }
}

void write_heatmap_csv(const BlockR2& blocks, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + file.string());
  out << "estimated\\true";
  for (const auto& l : blocks.labels) out << ',' << l;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < blocks.r2.rows(); ++i) {
    out << blocks.labels[i];
    for (Eigen::Index j = 0; j < blocks.r2.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", blocks.r2(i, j));
      out << buf;
    }
    out << '\n';
  }
}

void write_heatmap_svg(const BlockR2& blocks, const std::filesystem::path& file) {
  constexpr int cell = 80;
  constexpr int margin = 110;
  const int g = static_cast<int>(blocks.labels.size());
  const int size = margin + g * cell + 10;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + file.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" "
      << "font-family=\"sans-serif\" font-size=\"12\">\n";
  char buf[256];
  for (int i = 0; i < g; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%s</text>\n", margin - 6,
                  margin + i * cell + cell / 2 + 4, blocks.labels[i].c_str());
    out << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                  margin + i * cell + cell / 2, margin - 8, blocks.labels[i].c_str());
    out << buf;
  }
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double v = std::clamp(blocks.r2(i, j), 0.0, 1.0);
      // white (255,255,255) -> dark blue (8,48,107)
      const int r = static_cast<int>(std::lround(255 + v * (8 - 255)));
      const int gr = static_cast<int>(std::lround(255 + v * (48 - 255)));
      const int b = static_cast<int>(std::lround(255 + v * (107 - 255)));
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\" stroke=\"#999\"/>\n"
                    "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%.2f</text>\n",
                    margin + j * cell, margin + i * cell, cell, cell, r, gr, b, margin + j * cell + cell / 2,
                    margin + i * cell + cell / 2 + 4, v > 0.5 ? "#fff" : "#000", blocks.r2(i, j));
      out << buf;
    }
  }
  out << "</svg>\n";
}

}  // namespace thoughtcomm
