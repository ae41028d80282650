#pragma once

// Identifiability measurements: MCC under optimal matching, held-out block
// R^2, support F1, and the report that bundles them.

#include "thoughtcomm/assignment.hpp"
#include "thoughtcomm/structure.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace thoughtcomm {

using Json = nlohmann::ordered_json;

struct ReportInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Correlation { pearson, spearman };

struct MccResult {
  double value = 0;
  PermutationMap permutation;  // estimated column -> true column
  Matrix abs_correlation;      // estimated x true, after padding
  bool padded = false;
  std::vector<int> zero_variance_estimated;
  std::vector<int> zero_variance_true;
};

/// Mean absolute correlation over true latents under the optimal one-to-one
/// matching. The narrower side is padded with zero columns; zero-variance
/// columns correlate 0 with everything. When estimates outnumber truths the
/// padded true columns do not enter the mean.
MccResult mcc(const Matrix& z_hat, const Matrix& z_true, Correlation kind = Correlation::pearson);

struct R2Result {
  double value = 0;
  bool ridge_fallback = false;
};

inline constexpr double kRidgeFallback = 1e-6;
inline constexpr double kR2TestFraction = 0.2;

/// OLS with intercept from all predictor columns to each target column,
/// fitted on the first 80% of rows and scored on the last 20%; mean R^2 over
/// targets. An empty predictor set fits the intercept alone.
R2Result block_r2_detailed(const Matrix& predictors, const Matrix& targets);
inline double block_r2(const Matrix& predictors, const Matrix& targets) { return block_r2_detailed(predictors, targets).value; }

Matrix select_columns(const Matrix& m, const std::vector<int>& cols);

/// F1 over binary entries of the permuted estimate against the truth; 0 when
/// nothing is predicted or nothing is true.
double support_f1(const IndexMatrix& estimated, const IndexMatrix& truth, const PermutationMap& perm);
inline double support_f1(const SupportEstimate& est, const SupportMatrix& truth, const PermutationMap& perm) {
  return support_f1(est.support, truth.entries, perm);
}

/// Latent groups keyed by the agent subset that holds them.
struct LatentGroup {
  std::string label;
  std::vector<int> agents;
};

/// Group labels in the order the true groups appear, e.g. "private-0",
/// "private-1", "shared-0-1".
std::vector<LatentGroup> groups_from_spec(const std::vector<std::vector<int>>& subsets);
std::string group_label(const std::vector<int>& agents);

/// R^2 from each estimated group (rows) to each true group (columns).
/// Estimated columns are assigned to a group by their holder subset.
struct BlockR2 {
  std::vector<std::string> labels;
  Matrix r2;
  std::vector<std::vector<int>> estimated_columns;
  std::vector<std::vector<int>> true_columns;
  bool ridge_fallback = false;
};

BlockR2 block_r2_matrix(const Matrix& z_hat, const std::vector<std::vector<int>>& estimated_holders,
                        const Matrix& z_true, const std::vector<std::vector<int>>& true_holders);

double mean_diagonal(const Matrix& m);
double mean_off_diagonal(const Matrix& m);

struct EvalReport {
  double mcc = 0;
  PermutationMap mcc_permutation;
  std::vector<std::string> flags;
  BlockR2 blocks;
  double support_f1 = 0;
  PermutationMap support_permutation;
  SupportEstimate support;
  Json config = Json::object();
  Json training = Json::object();
  Json provenance = Json::object();
};

struct ReportPieces {
  MccResult mcc;
  BlockR2 blocks;
  SupportEstimate support;
  PermutationMap support_permutation;
  double support_f1 = 0;
  Json config = Json::object();
  Json training = Json::object();
  Json provenance = Json::object();
};

/// Aggregates pieces and enforces mcc in [0,1], r2 <= 1, f1 in [0,1].
EvalReport assemble_report(ReportPieces pieces);
void validate_report(const EvalReport& report);

inline constexpr int kReportFormatVersion = 1;
Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);

void write_heatmap_csv(const BlockR2& blocks, const std::filesystem::path& file);
/// Grid rendering; each cell colored on a linear white -> #08306b ramp over
/// R^2 clamped to [0, 1].
void write_heatmap_svg(const BlockR2& blocks, const std::filesystem::path& file);

}  // namespace thoughtcomm
