#include "thoughtcomm/experiment.hpp"

#include "thoughtcomm/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace thoughtcomm {

using OJson = nlohmann::ordered_json;

namespace {

template <typename T>
void read_if(const OJson& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string to_string(Correlation c) { return c == Correlation::pearson ? "pearson" : "spearman"; }

Correlation correlation_from_string(const std::string& s) {
  if (s == "pearson") return Correlation::pearson;
  if (s == "spearman") return Correlation::spearman;
  throw InvalidArgument("evaluation: unknown correlation '" + s + "'");
}

OJson generator_to_json(const GeneratorConfig& g) {
  OJson j;
  j["block_dims"] = g.block_dims;
  OJson groups = OJson::array();
  for (const auto& grp : g.groups) groups.push_back({{"agents", grp.agents}, {"count", grp.count}});
  j["groups"] = std::move(groups);
  j["n_samples"] = g.n_samples;
  j["p_row"] = g.p_row ? OJson(*g.p_row) : OJson(nullptr);
  j["cond_max"] = g.mixing.cond_max;
  j["max_amplitude"] = g.mixing.max_amplitude;
  j["max_attempts"] = g.mixing.max_attempts;
  return j;
}

GeneratorConfig generator_from_json(const OJson& j) {
  check_keys(j, {"block_dims", "groups", "n_samples", "p_row", "cond_max", "max_amplitude", "max_attempts"}, "generator");
  GeneratorConfig g;
  read_if(j, "block_dims", g.block_dims);
  if (j.contains("groups")) {
    g.groups.clear();
    if (!j.at("groups").is_array()) throw InvalidArgument("generator: groups must be an array");
    for (const auto& item : j.at("groups")) {
      check_keys(item, {"agents", "count"}, "generator.groups");
      g.groups.push_back({item.at("agents").get<std::vector<int>>(), item.at("count").get<int>()});
    }
  }
  read_if(j, "n_samples", g.n_samples);
  if (j.contains("p_row") && !j.at("p_row").is_null()) g.p_row = j.at("p_row").get<double>();
  read_if(j, "cond_max", g.mixing.cond_max);
  read_if(j, "max_amplitude", g.mixing.max_amplitude);
  read_if(j, "max_attempts", g.mixing.max_attempts);
  return g;
}

OJson family_to_json(const MockFamilyConfig& f) {
  return {{"n_agents", f.n_agents},
          {"shared_task_dims", f.shared_task_dims},
          {"private_task_dims", f.private_task_dims},
          {"shared_state_dims", f.shared_state_dims},
          {"private_state_dims", f.private_state_dims},
          {"classes", f.classes},
          {"prefix_length", f.prefix_length},
          {"embedding_width", f.embedding_width},
          {"private_leak", f.private_leak}};
}

MockFamilyConfig family_from_json(const OJson& j) {
  check_keys(j,
             {"n_agents", "shared_task_dims", "private_task_dims", "shared_state_dims", "private_state_dims", "classes",
              "prefix_length", "embedding_width", "private_leak"},
             "harness.family");
  MockFamilyConfig f;
  read_if(j, "n_agents", f.n_agents);
  read_if(j, "shared_task_dims", f.shared_task_dims);
  read_if(j, "private_task_dims", f.private_task_dims);
  read_if(j, "shared_state_dims", f.shared_state_dims);
  read_if(j, "private_state_dims", f.private_state_dims);
  read_if(j, "classes", f.classes);
  read_if(j, "prefix_length", f.prefix_length);
  read_if(j, "embedding_width", f.embedding_width);
  read_if(j, "private_leak", f.private_leak);
  return f;
}

OJson surrogate_to_json(const SurrogateConfig& s) {
  return {{"steps", s.steps},
          {"batch_tasks", s.batch_tasks},
          {"rounds", s.rounds},
          {"prefix_penalty", s.prefix_penalty},
          {"learning_rate", s.adam.lr},
          {"beta1", s.adam.beta1},
          {"beta2", s.adam.beta2},
          {"adam_eps", s.adam.eps}};
}

SurrogateConfig surrogate_from_json(const OJson& j) {
  check_keys(j, {"steps", "batch_tasks", "rounds", "prefix_penalty", "learning_rate", "beta1", "beta2", "adam_eps"},
             "harness.surrogate");
  SurrogateConfig s;
  read_if(j, "steps", s.steps);
  read_if(j, "batch_tasks", s.batch_tasks);
  read_if(j, "rounds", s.rounds);
  read_if(j, "prefix_penalty", s.prefix_penalty);
  read_if(j, "learning_rate", s.adam.lr);
  read_if(j, "beta1", s.adam.beta1);
  read_if(j, "beta2", s.adam.beta2);
  read_if(j, "adam_eps", s.adam.eps);
  return s;
}

Matrix holdout_rows(const Matrix& m, Eigen::Index begin) { return m.bottomRows(m.rows() - begin); }

}  // namespace

void GeneratorConfig::validate() const {
  if (block_dims.empty()) throw InvalidArgument("generator: block_dims is empty");
  for (int d : block_dims)
    if (d < 1) throw InvalidArgument("generator: block dims must be >= 1");
  if (groups.empty()) throw InvalidArgument("generator: groups is empty");
  const int n_agents = static_cast<int>(block_dims.size());
  for (const auto& g : groups) {
    if (g.agents.empty()) throw InvalidArgument("generator: group with no agents");
    if (g.count < 1) throw InvalidArgument("generator: group count must be >= 1");
    std::set<int> seen;
    for (int a : g.agents) {
      if (a < 0 || a >= n_agents) throw InvalidArgument("generator: group agent out of range");
      if (!seen.insert(a).second) throw InvalidArgument("generator: repeated agent in group");
    }
  }
  if (n_samples < 2) throw InvalidArgument("generator: n_samples must be >= 2");
  if (p_row && !(*p_row > 0 && *p_row <= 1)) throw InvalidArgument("generator: p_row must be in (0, 1]");
  if (!(mixing.cond_max > 1)) throw InvalidArgument("generator: cond_max must exceed 1");
  if (!(mixing.max_amplitude >= 0 && mixing.max_amplitude <= 0.9))
    throw InvalidArgument("generator: max_amplitude must be in [0, 0.9]");
  if (mixing.max_attempts < 1) throw InvalidArgument("generator: max_attempts must be >= 1");
}

void EvalConfig::validate() const {
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("evaluation: tau must be in (0, 1)");
  if (probe_count < 1) throw InvalidArgument("evaluation: probe_count must be >= 1");
}

TrainConfig HarnessConfig::default_harness_training() {
  TrainConfig t;
  t.lambda_sparse = 0.01;
  t.prior_weight = 10.0;
  t.adam.lr = 1e-2;
  t.epochs = 60;
  return t;
}

void HarnessConfig::validate() const {
  family.validate();
  if (rounds < 1) throw InvalidArgument("harness: rounds must be >= 1");
  if (episodes < 1) throw InvalidArgument("harness: episodes must be >= 1");
  if (train_samples < 2) throw InvalidArgument("harness: train_samples must be >= 2");
  if (!(tau > 0 && tau < 1)) throw InvalidArgument("harness: tau must be in (0, 1)");
  training.validate();
  surrogate.validate();
}

void SweepConfig::validate() const {
  if (dims.empty()) throw InvalidArgument("sweep: dims is empty");
  for (int d : dims)
    if (d < 4) throw InvalidArgument("sweep: dims must be >= 4");
  if (seeds.empty()) throw InvalidArgument("sweep: seeds is empty");
  if (width_per_dim < 1) throw InvalidArgument("sweep: width_per_dim must be >= 1");
  if (min_width < 1) throw InvalidArgument("sweep: min_width must be >= 1");
}

void ExperimentConfig::resolve_seeds() {
  training.seed = seed;
  harness.training.seed = seed;
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw InvalidArgument("config: output_dir is empty");
  generator.validate();
  training.validate();
  evaluation.validate();
  if (routing.weights) routing.weights->validate(harness.family.n_agents);
  harness.validate();
  sweep.validate();
}

OJson config_to_json(const ExperimentConfig& cfg) {
  OJson j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["generator"] = generator_to_json(cfg.generator);
  j["training"] = train_config_to_json(cfg.training);
  j["evaluation"] = {{"tau", cfg.evaluation.tau},
                     {"probe_count", cfg.evaluation.probe_count},
                     {"correlation", to_string(cfg.evaluation.correlation)}};
  j["routing"] = {{"weights", cfg.routing.weights ? weights_to_json(*cfg.routing.weights) : OJson(nullptr)}};
  j["harness"] = {{"family", family_to_json(cfg.harness.family)},
                  {"rounds", cfg.harness.rounds},
                  {"episodes", cfg.harness.episodes},
                  {"train_samples", cfg.harness.train_samples},
                  {"tau", cfg.harness.tau},
                  {"training", train_config_to_json(cfg.harness.training)},
                  {"surrogate", surrogate_to_json(cfg.harness.surrogate)}};
  j["sweep"] = {{"dims", cfg.sweep.dims}, {"seeds", cfg.sweep.seeds}, {"width_per_dim", cfg.sweep.width_per_dim},
                 {"min_width", cfg.sweep.min_width}};
  return j;
}

ExperimentConfig config_from_json(const OJson& j) {
  try {
    check_keys(j, {"seed", "output_dir", "generator", "training", "evaluation", "routing", "harness", "sweep"}, "config");
    ExperimentConfig cfg;
    read_if(j, "seed", cfg.seed);
    read_if(j, "output_dir", cfg.output_dir);
    if (j.contains("generator")) cfg.generator = generator_from_json(j.at("generator"));
    if (j.contains("training")) cfg.training = train_config_from_json(j.at("training"));
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      check_keys(e, {"tau", "probe_count", "correlation"}, "evaluation");
      read_if(e, "tau", cfg.evaluation.tau);
      read_if(e, "probe_count", cfg.evaluation.probe_count);
      if (e.contains("correlation")) cfg.evaluation.correlation = correlation_from_string(e.at("correlation").get<std::string>());
    }
    if (j.contains("routing")) {
      const auto& r = j.at("routing");
      check_keys(r, {"weights"}, "routing");
      if (r.contains("weights") && !r.at("weights").is_null()) cfg.routing.weights = weights_from_json(r.at("weights"));
    }
    if (j.contains("harness")) {
      const auto& h = j.at("harness");
      check_keys(h, {"family", "rounds", "episodes", "train_samples", "tau", "training", "surrogate"}, "harness");
      if (h.contains("family")) cfg.harness.family = family_from_json(h.at("family"));
      read_if(h, "rounds", cfg.harness.rounds);
      read_if(h, "episodes", cfg.harness.episodes);
      read_if(h, "train_samples", cfg.harness.train_samples);
      read_if(h, "tau", cfg.harness.tau);
      if (h.contains("training")) cfg.harness.training = train_config_from_json(h.at("training"));
      if (h.contains("surrogate")) cfg.harness.surrogate = surrogate_from_json(h.at("surrogate"));
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      check_keys(s, {"dims", "seeds", "width_per_dim", "min_width"}, "sweep");
      read_if(s, "dims", cfg.sweep.dims);
      read_if(s, "seeds", cfg.sweep.seeds);
      read_if(s, "width_per_dim", cfg.sweep.width_per_dim);
      read_if(s, "min_width", cfg.sweep.min_width);
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

ExperimentConfig preset_basic(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.output_dir = "basic-seed-" + std::to_string(seed);
  cfg.generator = GeneratorConfig{};
  cfg.training.lambda_sparse = 0.01;
  cfg.training.prior_weight = 10.0;
  cfg.training.adam.lr = 1e-2;
  cfg.training.epochs = 100;
  cfg.training.restarts = 6;
  cfg.resolve_seeds();
  return cfg;
}

std::vector<int> desk_sweep_dims() { return {8, 16, 32}; }

std::vector<int> full_sweep_dims() { return {124, 256, 384, 512, 640, 768, 896, 1024}; }

ExperimentConfig preset_mcc_sweep(std::vector<int> dims, std::vector<std::uint64_t> seeds) {
  ExperimentConfig cfg;
  cfg.output_dir = "mcc-sweep";
  cfg.sweep.dims = std::move(dims);
  cfg.sweep.seeds = std::move(seeds);
  if (!cfg.sweep.seeds.empty()) cfg.seed = cfg.sweep.seeds.front();
  cfg.generator.p_row = 0.5;
  cfg.training.lambda_sparse = 3e-4;
  cfg.training.prior_weight = 300.0;
  cfg.training.adam.lr = 3e-3;
  cfg.training.final_lr_ratio = 0.01;
  cfg.training.hidden_layers = 1;
  cfg.training.epochs = 1200;
  cfg.training.restarts = 2;
  cfg.resolve_seeds();
  return cfg;
}

ExperimentConfig sweep_setting(const ExperimentConfig& base, int dim, std::uint64_t seed) {
  if (dim < 4) throw InvalidArgument("sweep_setting: dim must be >= 4");
  ExperimentConfig cfg = base;
  cfg.seed = seed;
  cfg.output_dir = base.output_dir + "/dim-" + std::to_string(dim) + "/seed-" + std::to_string(seed);
  const int n_agents = dim <= 8 ? 2 : 4;
  cfg.generator.block_dims.assign(n_agents, 0);
  for (int a = 0; a < n_agents; ++a) cfg.generator.block_dims[a] = dim / n_agents + (a < dim % n_agents ? 1 : 0);

  cfg.generator.groups.clear();
  const int n_private = (dim / n_agents) / 2;
  for (int a = 0; a < n_agents; ++a) cfg.generator.groups.push_back({{a}, n_private});
  std::vector<std::vector<int>> pairs;
  for (int a = 0; a < n_agents; ++a)
    for (int b = a + 1; b < n_agents; ++b) pairs.push_back({a, b});
  const int remaining = dim - n_private * n_agents;
  const int n_pairs = static_cast<int>(pairs.size());
  for (int k = 0; k < n_pairs; ++k) {
    const int count = remaining / n_pairs + (k < remaining % n_pairs ? 1 : 0);
    if (count > 0) cfg.generator.groups.push_back({pairs[k], count});
  }
  cfg.training.hidden_width = std::max(base.sweep.min_width, base.sweep.width_per_dim * dim);
  cfg.resolve_seeds();
  cfg.validate();
  return cfg;
}

GeneratedData generate(const ExperimentConfig& cfg) {
  cfg.generator.validate();
  SeededRng rng(cfg.seed);
  SupportOptions options;
  options.p_row = cfg.generator.p_row;
  SupportMatrix support = sample_support(cfg.generator.block_dims, cfg.generator.groups, rng, options);
  MixingFunction mixing = build_mixing(support, rng, cfg.generator.mixing);
  Dataset data = generate_dataset(mixing, cfg.generator.n_samples, rng);
  data.seed = cfg.seed;
  OJson gen = generator_to_json(cfg.generator);
  gen["seed"] = cfg.seed;
  data.generator_config = gen.dump();
  return {std::move(data), std::move(mixing)};
}

namespace {

struct HeldOut {
  Matrix states;
  Matrix latents;
};

HeldOut held_out(const Dataset& data, const TrainConfig& training) {
  if (data.latents.rows() != data.states.rows()) throw InvalidArgument("evaluate: states and latents differ in rows");
  const Eigen::Index begin = holdout_begin(data.n_samples(), training.holdout_fraction);
  if (begin >= data.n_samples()) throw InvalidArgument("evaluate: no held-out rows");
  return {holdout_rows(data.states, begin), holdout_rows(data.latents, begin)};
}

OJson eval_json(const EvalConfig& eval) {
  return {{"tau", eval.tau}, {"probe_count", eval.probe_count}, {"correlation", to_string(eval.correlation)}};
}

EvalReport report_from(const Matrix& z_hat, const Matrix& z_true, SupportEstimate est, const Dataset& data,
                       const EvalConfig& eval, const OJson& training_summary, Eigen::Index probe_rows) {
  ReportPieces pieces;
  pieces.mcc = mcc(z_hat, z_true, eval.correlation);
  const auto est_sets = thought_sets(est, data.blocks);
  const auto true_sets = thought_sets(data.support.entries, data.blocks);
  pieces.blocks = block_r2_matrix(z_hat, holder_subsets(est_sets, static_cast<int>(z_hat.cols())), z_true,
                                  holder_subsets(true_sets, static_cast<int>(z_true.cols())));
  pieces.support_permutation = match_columns(est, data.support);
  pieces.support_f1 = support_f1(est, data.support, pieces.support_permutation);
  pieces.support = std::move(est);
  pieces.config = eval_json(eval);
  pieces.training = training_summary.is_null() ? OJson::object() : training_summary;
  pieces.provenance = {{"dataset_seed", data.seed},
                       {"n_samples", data.n_samples()},
                       {"holdout_rows", z_true.rows()},
                       {"probe_rows", probe_rows}};
  return assemble_report(std::move(pieces));
}

}  // namespace

EvalReport evaluate(const MlpModel<double>& model, const Dataset& data, const TrainConfig& training,
                    const EvalConfig& eval, const OJson& training_summary) {
  eval.validate();
  model.validate();
  if (model.input_width() != data.states.cols())
    throw InvalidArgument("evaluate: model input width " + std::to_string(model.input_width()) +
                          " does not match state width " + std::to_string(data.states.cols()));
  const HeldOut h = held_out(data, training);
  const Eigen::Index probes = std::min<Eigen::Index>(eval.probe_count, h.states.rows());
  const Matrix z_hat = encode(model, h.states);
  SupportEstimate est = estimate_support(model, h.states.topRows(probes), eval.tau);
  return report_from(z_hat, h.latents, std::move(est), data, eval, training_summary, probes);
}

EvalReport evaluate_truth(const Dataset& data, const TrainConfig& training, const EvalConfig& eval) {
  eval.validate();
  const HeldOut h = held_out(data, training);
  SupportEstimate est = threshold_support(data.support.entries.cast<double>(), eval.tau, 0);
  return report_from(h.latents, h.latents, std::move(est), data, eval, {{"source", "ground_truth"}}, 0);
}

SimulationResult simulate(const ExperimentConfig& cfg) {
  cfg.harness.validate();
  const HarnessConfig& h = cfg.harness;
  SeededRng rng(cfg.seed);
  SimulationResult out;
  out.family = planted_family(h.family, rng);
  const Matrix states = mock_states(out.family, h.train_samples, rng);
  const int n_z = h.family.task_dim();
  out.model = train(states, n_z, h.training).model;
  const Eigen::Index probes = std::min<Eigen::Index>(cfg.evaluation.probe_count, states.rows());
  out.support = estimate_support(out.model, states.topRows(probes), h.tau);
  out.weights = cfg.routing.weights ? *cfg.routing.weights : WeightTable::proportional(h.family.n_agents);
  out.weights.validate(h.family.n_agents);

  SeededRng adapter_rng = rng.split();
  out.adapter = train_adapter(out.family, out.model, out.weights, out.support, h.surrogate, adapter_rng);
  const Adapter zero = Adapter::zeros(out.adapter.n_route(), out.adapter.prefix_length, out.adapter.embedding_width);

  SeededRng task_rng = rng.split();
  for (int e = 0; e < h.episodes; ++e) {
    const Vector task = draw_task(out.family, task_rng);
    out.routed.push_back(run_episode(out.family.agents, out.model, out.adapter, out.weights, h.tau, h.rounds, task,
                                     &out.support));
    out.zero.push_back(run_episode(out.family.agents, out.model, zero, out.weights, h.tau, h.rounds, task, &out.support));
  }
  out.routed_consensus = consensus_rate(out.routed);
  out.zero_consensus = consensus_rate(out.zero);
  return out;
}

}  // namespace thoughtcomm
