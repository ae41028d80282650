// thoughtcomm: generate data, train, evaluate, simulate and sweep.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.

#include "thoughtcomm/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>

namespace fs = std::filesystem;
using namespace thoughtcomm;
using OJson = nlohmann::ordered_json;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
};

ExperimentConfig load_config(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.config.empty() ? ExperimentConfig{} : config_from_json(read_json_file(flags.config));
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.lambda) cfg.training.lambda_sparse = *flags.lambda;
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  cfg.resolve_seeds();
  cfg.validate();
  return cfg;
}

fs::path start_run(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_json_file(dir / "config.resolved.json", config_to_json(cfg));
  return dir;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_report(const EvalReport& report, const fs::path& dir, bool svg) {
  write_json_file(dir / "report.json", report_to_json(report));
  write_heatmap_csv(report.blocks, dir / "heatmap.csv");
  if (svg) write_heatmap_svg(report.blocks, dir / "heatmap.svg");
}

// Trains and saves model.json and trainlog.csv into dir. On divergence the
// partial log is written before rethrowing.
TrainResult train_into(const Dataset& data, const TrainConfig& cfg, const fs::path& dir) {
  try {
    TrainResult res = train(data, cfg);
    write_trainlog_csv(res.log, dir / "trainlog.csv");
    write_model(dir / "model.json", {res.model, cfg, training_summary(res.log), std::nullopt});
    return res;
  } catch (const TrainingFailed& e) {
    write_trainlog_csv(e.log, dir / "trainlog.csv");
    std::cerr << "training log: " << (dir / "trainlog.csv").string() << "\n";
    throw;
  }
}

int cmd_gen(const CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  const fs::path dir = start_run(cfg);
  const GeneratedData g = generate(cfg);
  write_dataset(g.dataset, dir);
  std::cout << "wrote " << g.dataset.n_samples() << " samples to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir) {
  const ExperimentConfig cfg = load_config(flags);
  const fs::path dir = start_run(cfg);
  const Dataset data = read_dataset(data_dir);
  const TrainResult res = train_into(data, cfg.training, dir);
  std::cout << "best restart " << res.log.best_restart << " epoch " << res.log.best_epoch << ", held-out total "
            << fmt(res.log.best_holdout_total) << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& model_path, const std::string& data_dir, bool svg,
             bool truth) {
  const ExperimentConfig cfg = load_config(flags);
  const fs::path dir = start_run(cfg);
  const Dataset data = read_dataset(data_dir);
  EvalReport report;
  if (truth) {
    report = evaluate_truth(data, cfg.training, cfg.evaluation);
  } else {
    if (model_path.empty()) throw InvalidArgument("eval: --model is required unless --truth is given");
    const ModelFile model = read_model(model_path);
    report = evaluate(model.model, data, model.config, cfg.evaluation, model.training);
  }
  write_report(report, dir, svg);
  std::cout << "MCC " << fmt(report.mcc) << "  support F1 " << fmt(report.support_f1) << "  R2 diag "
            << fmt(mean_diagonal(report.blocks.r2)) << " off " << fmt(mean_off_diagonal(report.blocks.r2)) << "\n";
  return 0;
}

int cmd_simulate(const CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  const fs::path dir = start_run(cfg);
  const SimulationResult sim = simulate(cfg);
  write_model(dir / "model.json", {sim.model, cfg.harness.training, OJson::object(), sim.adapter});

  std::ofstream traces(dir / "traces.jsonl", std::ios::trunc);
  std::ofstream summary(dir / "episodes_summary.csv", std::ios::trunc);
  summary << "episode,mode,rounds,final_answers,consensus\n";
  auto emit = [&](const std::vector<Episode>& episodes, const std::string& mode) {
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      for (const auto& round : episodes[e]) traces << round_to_json(round, static_cast<int>(e), mode).dump() << "\n";
      const RoundTrace& last = episodes[e].back();
      std::string answers;
      for (std::size_t k = 0; k < last.answers.size(); ++k) answers += (k ? " " : "") + std::to_string(last.answers[k]);
      summary << e << "," << mode << "," << episodes[e].size() << "," << answers << "," << (last.consensus ? 1 : 0)
              << "\n";
    }
  };
  emit(sim.routed, "routed");
  emit(sim.zero, "zero");
  if (!traces || !summary) throw std::filesystem::filesystem_error("simulate: write failed", dir, {});
  std::cout << "consensus routed " << fmt(sim.routed_consensus) << "  zero adapter " << fmt(sim.zero_consensus) << "\n";
  return 0;
}

struct SettingOutcome {
  int dim = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  int exit_code = 0;
  double mcc = 0;
  double support_f1 = 0;
  std::string error;
};

SettingOutcome run_setting(const ExperimentConfig& base, int dim, std::uint64_t seed, bool resume) {
  SettingOutcome out;
  out.dim = dim;
  out.seed = seed;
  try {
    const ExperimentConfig cfg = sweep_setting(base, dim, seed);
    const fs::path dir = cfg.output_dir;
    if (resume && fs::exists(dir / "report.json")) {
      const EvalReport r = report_from_json(read_json_file(dir / "report.json"));
      out.ok = true;
      out.mcc = r.mcc;
      out.support_f1 = r.support_f1;
      return out;
    }
    start_run(cfg);
    const GeneratedData g = generate(cfg);
    const TrainResult res = train_into(g.dataset, cfg.training, dir);
    const EvalReport r = evaluate(res.model, g.dataset, cfg.training, cfg.evaluation, training_summary(res.log));
    write_report(r, dir, false);
    out.ok = true;
    out.mcc = r.mcc;
    out.support_f1 = r.support_f1;
  } catch (const InvalidArgument& e) {
    out.exit_code = kExitInvalid;
    out.error = e.what();
  } catch (const std::exception& e) {
    out.exit_code = kExitNumeric;
    out.error = e.what();
  }
  return out;
}

int cmd_sweep(const CommonFlags& flags, int jobs, bool resume) {
  if (jobs < 1) throw InvalidArgument("sweep: --jobs must be >= 1");
  const ExperimentConfig cfg = load_config(flags);
  const fs::path dir = start_run(cfg);

  std::vector<std::pair<int, std::uint64_t>> settings;
  for (int d : cfg.sweep.dims)
    for (std::uint64_t s : cfg.sweep.seeds) settings.emplace_back(d, s);
  std::vector<SettingOutcome> outcomes(settings.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < settings.size(); i = next++) {
      outcomes[i] = run_setting(cfg, settings[i].first, settings[i].second, resume);
      const std::lock_guard<std::mutex> lock(log_mutex);
      const SettingOutcome& o = outcomes[i];
      std::cout << "dim " << o.dim << " seed " << o.seed << ": "
                << (o.ok ? "MCC " + fmt(o.mcc) : "failed (" + o.error + ")") << std::endl;
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(settings.size()));
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::sort(outcomes.begin(), outcomes.end(),
            [](const SettingOutcome& a, const SettingOutcome& b) { return std::tie(a.dim, a.seed) < std::tie(b.dim, b.seed); });
  std::ofstream settings_csv(dir / "settings.csv", std::ios::trunc);
  settings_csv << "dim,seed,status,mcc,support_f1,error\n";
  std::map<int, std::vector<double>> by_dim;
  for (const auto& o : outcomes) {
    std::string error = o.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    settings_csv << o.dim << "," << o.seed << "," << (o.ok ? "ok" : "failed") << "," << (o.ok ? fmt(o.mcc) : "")
                 << "," << (o.ok ? fmt(o.support_f1) : "") << "," << error << "\n";
    auto& v = by_dim[o.dim];
    if (o.ok) v.push_back(o.mcc);
  }
  std::ofstream curve(dir / "mcc_curve.csv", std::ios::trunc);
  curve << "dim,settings_ok,mcc_mean,mcc_min,mcc_max,identifiable\n";
  for (const auto& [d, v] : by_dim) {
    curve << d << "," << v.size();
    if (v.empty()) {
      curve << ",,,,0\n";
      continue;
    }
    double sum = 0;
    for (double m : v) sum += m;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const auto n_ident = std::count_if(v.begin(), v.end(), [](double m) { return m >= kIdentifiableMcc; });
    curve << "," << fmt(sum / static_cast<double>(v.size())) << "," << fmt(*lo) << "," << fmt(*hi) << "," << n_ident
          << "\n";
  }
  if (std::any_of(outcomes.begin(), outcomes.end(), [](const SettingOutcome& o) { return o.ok; })) return 0;
  return outcomes.empty() ? kExitInvalid : outcomes.front().exit_code;
}

int cmd_preset(const std::string& name, const CommonFlags& flags, bool full_scale) {
  const std::uint64_t seed = flags.seed.value_or(1);
  ExperimentConfig cfg;
  if (name == "basic") {
    cfg = preset_basic(seed);
  } else if (name == "mcc-sweep") {
    cfg = preset_mcc_sweep(full_scale ? full_sweep_dims() : desk_sweep_dims(), {seed, seed + 1, seed + 2});
  } else {
    throw InvalidArgument("preset: unknown preset '" + name + "' (basic, mcc-sweep)");
  }
  if (flags.lambda) cfg.training.lambda_sparse = *flags.lambda;
  cfg.validate();
  const std::string text = config_to_json(cfg).dump(2) + "\n";
  if (flags.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(flags.out, std::ios::trunc);
    f << text;
    if (!f) throw std::filesystem::filesystem_error("preset: cannot write", fs::path(flags.out), {});
  }
  return 0;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* c = cmd->add_option("--config", flags.config, "Experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", flags.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", flags.seed, "Seed (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-thought pipeline on synthetic multi-agent data"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string data_dir, model_path, preset_name;
  bool svg = false, truth = false, resume = false, full_scale = false;
  int jobs = 1;

  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  add_common(gen, flags, true);

  auto* trn = app.add_subcommand("train", "Train the sparsity-regularized autoencoder");
  add_common(trn, flags, true);
  trn->add_option("--data", data_dir, "Dataset directory")->required();
  trn->add_option("--lambda", flags.lambda, "Override lambda_sparse (0 gives the unregularized baseline)");

  auto* evl = app.add_subcommand("eval", "Evaluate a model against ground truth");
  add_common(evl, flags, false);
  evl->add_option("--model", model_path, "model.json");
  evl->add_option("--data", data_dir, "Dataset directory")->required();
  evl->add_flag("--svg", svg, "Also write heatmap.svg");
  evl->add_flag("--truth", truth, "Score the ground-truth latents against themselves");

  auto* sim = app.add_subcommand("simulate", "Run the mock multi-agent harness");
  add_common(sim, flags, true);

  auto* swp = app.add_subcommand("sweep", "Run an MCC sweep over dims and seeds");
  add_common(swp, flags, true);
  swp->add_option("--jobs", jobs, "Settings run in parallel")->check(CLI::PositiveNumber);
  swp->add_flag("--resume", resume, "Skip settings that already have report.json");
  swp->add_option("--lambda", flags.lambda, "Override lambda_sparse");

  auto* pre = app.add_subcommand("preset", "Print or write a preset config");
  pre->add_option("name", preset_name, "basic or mcc-sweep")->required();
  pre->add_option("--out", flags.out, "Output file (stdout if omitted)");
  pre->add_option("--seed", flags.seed, "Seed");
  pre->add_option("--lambda", flags.lambda, "Override lambda_sparse");
  pre->add_flag("--full-scale", full_scale, "Use the full dims list (124 to 1024) for mcc-sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*gen) return cmd_gen(flags);
    if (*trn) return cmd_train(flags, data_dir);
    if (*evl) return cmd_eval(flags, model_path, data_dir, svg, truth);
    if (*sim) return cmd_simulate(flags);
    if (*swp) return cmd_sweep(flags, jobs, resume);
    if (*pre) return cmd_preset(preset_name, flags, full_scale);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitInvalid;
}
