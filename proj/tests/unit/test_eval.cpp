#include "thoughtcomm/eval.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace thoughtcomm;

namespace {

Matrix permute_flip_affine(const Matrix& z, SeededRng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(z.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double scale = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 10.0);
    out.col(j) = (scale * z.col(perm[j])).array() + rng.uniform(-5.0, 5.0);
  }
  return out;
}

int line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

ReportPieces sample_pieces() {
  SeededRng rng(4);
  const Matrix z = sample_laplace(rng, 500, 3, 1.0);
  ReportPieces p;
  p.mcc = mcc(z, z);
  p.blocks = block_r2_matrix(z, {{0}, {1}, {0, 1}}, z, {{0}, {1}, {0, 1}});
  IndexMatrix b(2, 3);
  b << 1, 0, 1, 0, 1, 1;
  p.support = threshold_support(b.cast<double>(), 0.1, 0);
  p.support_permutation = match_columns(b, b);
  p.support_f1 = support_f1(b, b, p.support_permutation);
  p.config = {{"tau", 0.1}};
  return p;
}

}  // namespace

TEST_CASE("mcc") {
  SeededRng rng(1);
  const Matrix z = sample_laplace(rng, 2000, 4, 1.0);
  SUBCASE("identical latents") { CHECK(mcc(z, z).value == doctest::Approx(1.0).epsilon(1e-14)); }
  SUBCASE("invariant to permutation, sign and affine maps") {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix t = permute_flip_affine(z, rng);
      CHECK(std::abs(mcc(t, z).value - 1.0) < 1e-12);
      CHECK(std::abs(mcc(t, z, Correlation::spearman).value - 1.0) < 1e-12);
    }
  }
  SUBCASE("independent samples score low") {
    SeededRng r(2);
    const Matrix a = sample_laplace(r, 10000, 4, 1.0), b = sample_laplace(r, 10000, 4, 1.0);
    CHECK(mcc(a, b).value < 0.1);
  }
  SUBCASE("permutation maps each estimate to its source") {
    Matrix swapped = z;
    swapped.col(0).swap(swapped.col(3));
    CHECK(mcc(swapped, z).permutation.target == std::vector<int>{3, 1, 2, 0});
  }
  SUBCASE("padding and constant columns") {
    const MccResult fewer = mcc(z.leftCols(2), z);
    CHECK(fewer.padded);
    CHECK(fewer.value == doctest::Approx(0.5));
    const MccResult more = mcc(z, z.leftCols(2));
    CHECK(more.value == doctest::Approx(1.0));
    Matrix flat = z;
    flat.col(1).setConstant(3.0);
    const MccResult c = mcc(flat, z);
    CHECK(c.zero_variance_estimated == std::vector<int>{1});
    CHECK(c.value == doctest::Approx(0.75));
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(mcc(z.topRows(10), z), InvalidArgument);
    CHECK_THROWS_AS(mcc(z.topRows(1), z.topRows(1)), InvalidArgument);
  }
}

TEST_CASE("block r2") {
  SeededRng rng(3);
  const Matrix z = sample_laplace(rng, 10000, 3, 1.0);
  CHECK(block_r2(z, z) == doctest::Approx(1.0).epsilon(1e-10));
  const Matrix a = sample_normal(rng, 3, 3) + 3 * Matrix::Identity(3, 3);
  CHECK(block_r2(z * a.transpose(), z) >= 0.999);
  CHECK(block_r2(sample_normal(rng, 10000, 3), z) < 0.05);
  CHECK(block_r2(Matrix(10000, 0), z) < 0.01);
  Matrix dup(10000, 2);
  dup << z.col(0), z.col(0);
  const R2Result r = block_r2_detailed(dup, z.leftCols(1));
  CHECK(r.ridge_fallback);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(block_r2(z.topRows(4), z.topRows(4)), InvalidArgument);
}

TEST_CASE("block r2 matrix") {
  SeededRng rng(5);
  const Matrix z = sample_laplace(rng, 4000, 3, 1.0);
  Matrix est(4000, 3);
  est << z.col(2), z.col(0), z.col(1);
  const BlockR2 b = block_r2_matrix(est, {{0, 1}, {0}, {1}}, z, {{0}, {1}, {0, 1}});
  CHECK(b.labels == std::vector<std::string>{"private-0", "private-1", "shared-0-1"});
  CHECK(mean_diagonal(b.r2) > 0.999);
  CHECK(std::abs(mean_off_diagonal(b.r2)) < 0.01);
  CHECK(b.estimated_columns[2] == std::vector<int>{0});
}

TEST_CASE("support f1") {
  IndexMatrix truth(4, 2);
  truth << 1, 0, 1, 1, 0, 1, 0, 0;
  PermutationMap id;
  id.target = {0, 1};
  id.score = {0, 0};
  CHECK(support_f1(truth, truth, id) == 1.0);
  // 4 of 8 entries true: precision 0.5, recall 1
  CHECK(support_f1(IndexMatrix::Ones(4, 2), truth, id) == doctest::Approx(2 * 0.5 / 1.5));
  CHECK(support_f1(IndexMatrix::Zero(4, 2), truth, id) == 0.0);
  PermutationMap bad;
  bad.target = {0, 0};
  CHECK_THROWS_AS(support_f1(truth, truth, bad), InvalidArgument);
}

TEST_CASE("report assembly and files") {
  SUBCASE("valid pieces") {
    const EvalReport r = assemble_report(sample_pieces());
    CHECK(r.mcc == doctest::Approx(1.0));
    CHECK(r.support_f1 == 1.0);
  }
  SUBCASE("mcc out of range is rejected") {
    ReportPieces p = sample_pieces();
    p.mcc.value = 1.5;
    CHECK_THROWS_AS(assemble_report(p), ReportInvalid);
  }
  SUBCASE("negative f1 is rejected") {
    ReportPieces p = sample_pieces();
    p.support_f1 = -0.1;
    CHECK_THROWS_AS(assemble_report(p), ReportInvalid);
  }
  SUBCASE("json round trip") {
    const EvalReport r = assemble_report(sample_pieces());
    const Json j = report_to_json(r);
    CHECK(report_to_json(report_from_json(j)).dump() == j.dump());
    Json broken = j;
    broken.erase("mcc");
    CHECK_THROWS_AS(report_from_json(broken), InvalidArgument);
  }
  SUBCASE("heatmap files") {
    const EvalReport r = assemble_report(sample_pieces());
    const auto dir = std::filesystem::temp_directory_path() / "thoughtcomm_eval_test";
    std::filesystem::create_directories(dir);
    write_heatmap_csv(r.blocks, dir / "heatmap.csv");
    write_heatmap_svg(r.blocks, dir / "heatmap.svg");
    CHECK(line_count(dir / "heatmap.csv") == static_cast<int>(r.blocks.labels.size()) + 1);
    std::ifstream svg(dir / "heatmap.svg");
    std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
    CHECK(text.rfind("<svg", 0) == 0);
    CHECK(text.find("</svg>") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
}
