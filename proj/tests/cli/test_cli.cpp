#include "support/cli_runner.hpp"
#include "thoughtcomm/experiment.hpp"
#include "thoughtcomm/model_io.hpp"

#include <doctest.h>

#include <filesystem>

using namespace thoughtcomm;
using namespace thoughtcomm::cli_test;
namespace fs = std::filesystem;

namespace {

const fs::path kBinary = THOUGHTCOMM_BIN;

RunResult tc(const fs::path& cwd, const std::string& args) { return run_tool(kBinary, cwd, args); }

ExperimentConfig quick_config() {
  ExperimentConfig cfg = preset_basic(1);
  cfg.generator.n_samples = 2000;
  cfg.training.epochs = 3;
  cfg.training.restarts = 1;
  cfg.training.hidden_width = 8;
  return cfg;
}

void write_config(const fs::path& file, const ExperimentConfig& cfg) { write_json_file(file, config_to_json(cfg)); }

}  // namespace

TEST_CASE("usage errors") {
  ScratchDir dir("tc_cli_");
  CHECK(tc(dir.path(), "--help").exit_code == 0);
  CHECK(tc(dir.path(), "").exit_code == 2);
  CHECK(tc(dir.path(), "frobnicate").exit_code == 2);
  CHECK(tc(dir.path(), "gen").exit_code == 2);
  CHECK(tc(dir.path(), "gen --config missing.json").exit_code == 2);
  CHECK(tc(dir.path(), "preset nope").exit_code == 2);

  SUBCASE("bad group spec") {
    auto j = config_to_json(quick_config());
    j["generator"]["groups"][0]["agents"] = {5};
    write_json_file(dir.path() / "bad.json", j);
    const RunResult r = tc(dir.path(), "gen --config bad.json --out data");
    CHECK(r.exit_code == 2);
    CHECK_FALSE(r.output.empty());
  }
  SUBCASE("malformed json") {
    write_text(dir.path() / "broken.json", "{\"seed\": ");
    CHECK(tc(dir.path(), "gen --config broken.json").exit_code == 2);
  }
  SUBCASE("missing data") {
    write_config(dir.path() / "c.json", quick_config());
    CHECK(tc(dir.path(), "train --config c.json --data nowhere --out t").exit_code == 2);
    CHECK(tc(dir.path(), "eval --data nowhere --truth --out e").exit_code == 2);
  }
}

TEST_CASE("preset") {
  ScratchDir dir("tc_cli_");
  const RunResult r = tc(dir.path(), "preset basic --seed 7");
  REQUIRE(r.exit_code == 0);
  const ExperimentConfig cfg = config_from_json(nlohmann::ordered_json::parse(r.output));
  CHECK(cfg.seed == 7);
  CHECK(cfg.generator.block_dims == std::vector<int>{2, 2});
  REQUIRE(tc(dir.path(), "preset mcc-sweep --out sweep.json").exit_code == 0);
  CHECK(config_from_json(read_json_file(dir.path() / "sweep.json")).sweep.dims == desk_sweep_dims());
  REQUIRE(tc(dir.path(), "preset mcc-sweep --full-scale --out big.json").exit_code == 0);
  CHECK(config_from_json(read_json_file(dir.path() / "big.json")).sweep.dims == full_sweep_dims());
}

TEST_CASE("gen, train, eval") {
  ScratchDir dir("tc_cli_");
  const fs::path d = dir.path();
  write_config(d / "c.json", quick_config());
  REQUIRE(tc(d, "gen --config c.json --out data").exit_code == 0);
  for (const char* f : {"states.bin", "latents.bin", "meta.json", "config.resolved.json"}) CHECK(fs::exists(d / "data" / f));

  SUBCASE("truth scores perfectly and the heatmap has one row per group") {
    const RunResult r = tc(d, "eval --config c.json --data data --truth --svg --out truth");
    REQUIRE(r.exit_code == 0);
    const EvalReport report = report_from_json(read_json_file(d / "truth/report.json"));
    CHECK(report.mcc == doctest::Approx(1.0));
    CHECK(report.support_f1 == 1.0);
    CHECK(read_lines(d / "truth/heatmap.csv").size() == 3 + 1);
    CHECK(read_text(d / "truth/heatmap.svg").find("<svg") != std::string::npos);
  }
  SUBCASE("train then eval") {
    REQUIRE(tc(d, "train --config c.json --data data --out model").exit_code == 0);
    const auto log = read_lines(d / "model/trainlog.csv");
    CHECK(log.size() == 3 + 1);
    CHECK(read_model(d / "model/model.json").config.epochs == 3);
    REQUIRE(tc(d, "eval --config c.json --model model/model.json --data data --out ev").exit_code == 0);
    const double mcc = report_from_json(read_json_file(d / "ev/report.json")).mcc;
    CHECK(mcc >= 0.0);
    CHECK(mcc <= 1.0);
  }
  SUBCASE("lambda override lands in the resolved config") {
    REQUIRE(tc(d, "train --config c.json --data data --out lam --lambda 0").exit_code == 0);
    CHECK(config_from_json(read_json_file(d / "lam/config.resolved.json")).training.lambda_sparse == 0.0);
  }
  SUBCASE("width mismatch between model and data") {
    ExperimentConfig other = quick_config();
    other.generator.block_dims = {3, 2};
    other.generator.groups = {{{0}, 2}, {{1}, 1}, {{0, 1}, 2}};
    write_config(d / "o.json", other);
    REQUIRE(tc(d, "gen --config o.json --out data5").exit_code == 0);
    REQUIRE(tc(d, "train --config c.json --data data --out model").exit_code == 0);
    CHECK(tc(d, "eval --config c.json --model model/model.json --data data5 --out bad").exit_code == 2);
  }
}

TEST_CASE("sweep") {
  ScratchDir dir("tc_cli_");
  const fs::path d = dir.path();
  ExperimentConfig cfg = preset_mcc_sweep({4, 6}, {2, 1});
  cfg.generator.n_samples = 1500;
  cfg.training.epochs = 2;
  cfg.training.restarts = 1;
  cfg.sweep.min_width = 8;
  write_config(d / "s.json", cfg);
  const RunResult r = tc(d, "sweep --config s.json --jobs 2 --out sw");
  REQUIRE(r.exit_code == 0);

  const auto settings = read_lines(d / "sw/settings.csv");
  REQUIRE(settings.size() == 5);
  CHECK(settings[0] == "dim,seed,status,mcc,support_f1,error");
  CHECK(settings[1].rfind("4,1,ok,", 0) == 0);
  CHECK(settings[2].rfind("4,2,ok,", 0) == 0);
  CHECK(settings[3].rfind("6,1,ok,", 0) == 0);
  CHECK(settings[4].rfind("6,2,ok,", 0) == 0);
  for (int dim : {4, 6})
    for (int seed : {1, 2}) {
      const fs::path s = d / "sw" / ("dim-" + std::to_string(dim)) / ("seed-" + std::to_string(seed));
      CHECK(fs::exists(s / "report.json"));
      CHECK(fs::exists(s / "model.json"));
    }
  const auto curve = read_lines(d / "sw/mcc_curve.csv");
  REQUIRE(curve.size() == 3);
  CHECK(curve[1].rfind("4,2,", 0) == 0);
  CHECK(curve[2].rfind("6,2,", 0) == 0);

  SUBCASE("resume skips finished settings") {
    const fs::path report = d / "sw/dim-4/seed-1/report.json";
    const auto before = fs::last_write_time(report);
    const std::string settings_before = read_text(d / "sw/settings.csv");
    fs::remove(d / "sw/dim-6/seed-2/report.json");
    REQUIRE(tc(d, "sweep --config s.json --out sw --resume").exit_code == 0);
    CHECK(fs::last_write_time(report) == before);
    CHECK(fs::exists(d / "sw/dim-6/seed-2/report.json"));
    CHECK(read_text(d / "sw/settings.csv") == settings_before);
  }
}

TEST_CASE("simulate") {
  ScratchDir dir("tc_cli_");
  const fs::path d = dir.path();
  ExperimentConfig cfg;
  cfg.harness.episodes = 12;
  cfg.harness.train_samples = 600;
  cfg.harness.training.epochs = 4;
  cfg.harness.surrogate.steps = 8;
  cfg.harness.surrogate.batch_tasks = 4;
  write_config(d / "h.json", cfg);
  REQUIRE(tc(d, "simulate --config h.json --out sim").exit_code == 0);

  CHECK(read_model(d / "sim/model.json").adapter.has_value());
  const auto summary = read_lines(d / "sim/episodes_summary.csv");
  REQUIRE(summary.size() == 1 + 2 * 12);
  CHECK(summary[0] == "episode,mode,rounds,final_answers,consensus");

  // the summary's consensus column agrees with the final round of each trace
  std::map<std::pair<std::string, int>, bool> last;
  int lines = 0;
  for (const auto& line : read_lines(d / "sim/traces.jsonl")) {
    const auto j = nlohmann::ordered_json::parse(line);
    ++lines;
    if (j.at("round").get<int>() == cfg.harness.rounds)
      last[{j.at("mode").get<std::string>(), j.at("episode").get<int>()}] = j.at("consensus").get<bool>();
  }
  CHECK(lines == 2 * 12 * cfg.harness.rounds);
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const std::string& row = summary[i];
    const auto c1 = row.find(',');
    const auto c2 = row.find(',', c1 + 1);
    const int episode = std::stoi(row.substr(0, c1));
    const std::string mode = row.substr(c1 + 1, c2 - c1 - 1);
    CHECK(last.at({mode, episode}) == (row.back() == '1'));
  }
}
