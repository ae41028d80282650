#include "thoughtcomm/harness.hpp"

#include "thoughtcomm/json_io.hpp"

#include <algorithm>
#include <cmath>

namespace thoughtcomm {

Vector MockAgent::state(const Vector& task, const Matrix& prefix) const {
  if (task.size() != task_weight.cols()) throw InvalidArgument("MockAgent: task width mismatch");
  if (prefix.size() != prefix_weight.cols()) throw InvalidArgument("MockAgent: prefix size mismatch");
  Vector flat(prefix.size());
  for (Eigen::Index i = 0; i < prefix.rows(); ++i)
    for (Eigen::Index k = 0; k < prefix.cols(); ++k) flat(i * prefix.cols() + k) = prefix(i, k);
  return (task_weight * task + prefix_weight * flat + offset).array().tanh().matrix();
}

int MockAgent::answer(const Vector& state) const {
  if (state.size() != readout.cols()) throw InvalidArgument("MockAgent: state width mismatch");
  const Vector scores = readout * state;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c)
    if (scores(c) > scores(best)) best = c;
  return static_cast<int>(best) + 1;
}

void MockFamilyConfig::validate() const {
  if (n_agents < 2) throw InvalidArgument("mock family: need at least two agents");
  if (shared_task_dims < 1 || private_task_dims < 0) throw InvalidArgument("mock family: invalid task dims");
  if (shared_state_dims < 1 || private_state_dims < 0) throw InvalidArgument("mock family: invalid state dims");
  if (private_task_dims > 0 && private_state_dims < 1)
    throw InvalidArgument("mock family: private task parts need private state coordinates");
  if (classes < 2) throw InvalidArgument("mock family: need at least two classes");
  if (prefix_length < 1 || embedding_width < 1) throw InvalidArgument("mock family: invalid prefix shape");
  if (!std::isfinite(private_leak)) throw InvalidArgument("mock family: non-finite private_leak");
}

AgentBlocks MockFamily::blocks() const {
  return AgentBlocks(std::vector<int>(agents.size(), config.state_width()));
}

MockFamily planted_family(const MockFamilyConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const int s = cfg.shared_state_dims;
  const int p = cfg.private_state_dims;
  const int width = cfg.prefix_length * cfg.embedding_width;
  const Matrix shared_task = sample_normal(rng, s, cfg.shared_task_dims, 1.0 / std::sqrt(cfg.shared_task_dims));
  const Matrix leak_direction = sample_normal(rng, width, cfg.private_task_dims, 1.0);
  Matrix readout = Matrix::Zero(cfg.classes, cfg.state_width());
  readout.leftCols(s) = sample_normal(rng, cfg.classes, s, 1.0);

  MockFamily family;
  family.config = cfg;
  for (int k = 0; k < cfg.n_agents; ++k) {
    MockAgent a;
    a.index = k;
    a.prefix_weight = sample_normal(rng, cfg.state_width(), width, 1.0 / std::sqrt(width));
    a.task_weight = Matrix::Zero(cfg.state_width(), cfg.task_dim());
    a.task_weight.topLeftCorner(s, cfg.shared_task_dims) = shared_task;
    if (cfg.private_task_dims > 0) {
      const int col = cfg.shared_task_dims + k * cfg.private_task_dims;
      a.task_weight.block(0, col, s, cfg.private_task_dims) =
          cfg.private_leak * a.prefix_weight.topRows(s) * leak_direction;
      a.task_weight.block(s, col, p, cfg.private_task_dims) =
          sample_normal(rng, p, cfg.private_task_dims, 1.0 / std::sqrt(cfg.private_task_dims));
    }
    a.offset = sample_normal(rng, cfg.state_width(), 1, 0.1);
    a.readout = readout;
    family.agents.push_back(std::move(a));
  }
  return family;
}

Vector draw_task(const MockFamily& family, SeededRng& rng) {
  return sample_laplace<double>(rng, family.config.task_dim(), 1, 1.0);
}

Matrix mock_states(const MockFamily& family, int n, SeededRng& rng) {
  if (n < 1) throw InvalidArgument("mock_states: need at least one sample");
  const int w = family.config.state_width();
  const Matrix zero = Matrix::Zero(family.config.prefix_length, family.config.embedding_width);
  Matrix out(n, w * static_cast<int>(family.agents.size()));
  for (int r = 0; r < n; ++r) {
    const Vector task = draw_task(family, rng);
    for (std::size_t k = 0; k < family.agents.size(); ++k)
      out.block(r, static_cast<Eigen::Index>(k) * w, 1, w) = family.agents[k].state(task, zero).transpose();
  }
  return out;
}

namespace {

std::vector<int> agent_widths(const std::vector<MockAgent>& agents) {
  std::vector<int> w;
  for (const auto& a : agents) w.push_back(a.state_width());
  return w;
}

}  // namespace

Episode run_episode(const std::vector<MockAgent>& agents, const MlpModel<double>& model, const Adapter& adapter,
                    const WeightTable& weights, double tau, int rounds, const Vector& task,
                    const SupportEstimate* fixed_support) {
  if (rounds < 1) throw InvalidArgument("run_episode: rounds must be >= 1");
  if (agents.empty()) throw InvalidArgument("run_episode: no agents");
  adapter.validate();
  const AgentBlocks blocks(agent_widths(agents));
  if (blocks.n_h() != model.input_width())
    throw InvalidArgument("run_episode: model input width does not match concatenated agent states");
  if (adapter.n_route() != model.latent_width()) throw InvalidArgument("run_episode: adapter width != latent width");
  for (const auto& a : agents)
    if (a.prefix_weight.cols() != adapter.weight.rows())
      throw InvalidArgument("run_episode: agent prefix map does not match adapter output");
  if (fixed_support && (fixed_support->support.rows() != model.input_width() ||
                        fixed_support->support.cols() != model.latent_width()))
    throw InvalidArgument("run_episode: support shape does not match model");

  const Matrix zero = Matrix::Zero(adapter.prefix_length, adapter.embedding_width);
  std::vector<Matrix> previous(agents.size(), zero);
  Episode episode;
  for (int t = 1; t <= rounds; ++t) {
    RoundTrace round;
    round.round = t;
    Matrix joined(1, blocks.n_h());
    for (std::size_t k = 0; k < agents.size(); ++k) {
      round.states.push_back(agents[k].state(task, previous[k]));
      joined.block(0, blocks.begin(static_cast<int>(k)), 1, blocks.dim(static_cast<int>(k))) =
          round.states.back().transpose();
    }
    round.latents = encode(model, joined).row(0).transpose();
    const SupportEstimate support = fixed_support ? *fixed_support : estimate_support(model, joined, tau);
    const AgentThoughtSets sets = thought_sets(support, blocks);
    const AgreementVector alpha = agreement(sets, static_cast<int>(model.latent_width()));
    for (std::size_t k = 0; k < agents.size(); ++k) {
      round.routed.push_back(route(round.latents, sets, alpha, weights, static_cast<int>(k)));
      round.prefixes.push_back(make_prefix(adapter, round.routed.back()));
      round.answers.push_back(agents[k].answer(agents[k].state(task, round.prefixes.back())));
    }
    round.consensus = std::all_of(round.answers.begin(), round.answers.end(),
                                  [&](int a) { return a == round.answers.front(); });
    previous = round.prefixes;
    episode.push_back(std::move(round));
  }
  return episode;
}

double consensus_rate(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw InvalidArgument("consensus_rate: no episodes");
  int agreed = 0;
  for (const auto& e : episodes) {
    if (e.empty()) throw InvalidArgument("consensus_rate: empty episode");
    if (e.back().consensus) ++agreed;
  }
  return static_cast<double>(agreed) / static_cast<double>(episodes.size());
}

void SurrogateConfig::validate() const {
  if (steps < 0 || batch_tasks < 1 || rounds < 1) throw InvalidArgument("surrogate: invalid schedule");
  if (!(prefix_penalty >= 0)) throw InvalidArgument("surrogate: prefix_penalty must be >= 0");
  if (!(adam.lr > 0)) throw InvalidArgument("surrogate: learning rate must be positive");
}

double surrogate_loss(const MockFamily& family, const Matrix& adapter_weight,
                      const std::vector<SurrogateSample>& samples, double prefix_penalty, Matrix* grad) {
  if (samples.empty()) throw InvalidArgument("surrogate_loss: no samples");
  const auto n_agents = static_cast<int>(family.agents.size());
  const int s = family.config.shared_state_dims;
  if (grad) *grad = Matrix::Zero(adapter_weight.rows(), adapter_weight.cols());
  double total = 0;
  for (const auto& sample : samples) {
    if (static_cast<int>(sample.inputs.size()) != n_agents) throw InvalidArgument("surrogate_loss: input count");
    std::vector<Vector> flat(n_agents), post(n_agents);
    for (int k = 0; k < n_agents; ++k) {
      const auto& a = family.agents[k];
      flat[k] = adapter_weight * sample.inputs[k];
      post[k] = (a.task_weight * sample.task + a.prefix_weight * flat[k] + a.offset).array().tanh().matrix();
    }
    Vector sum = Vector::Zero(s);
    for (int k = 0; k < n_agents; ++k) sum += post[k].head(s);
    std::vector<Vector> diff(n_agents);
    Vector diff_sum = Vector::Zero(s);
    for (int k = 0; k < n_agents; ++k) {
      const Vector peer_mean = (sum - post[k].head(s)) / static_cast<double>(n_agents - 1);
      diff[k] = post[k].head(s) - peer_mean;
      diff_sum += diff[k];
      total += diff[k].squaredNorm() + prefix_penalty * flat[k].squaredNorm();
    }
    if (!grad) continue;
    for (int k = 0; k < n_agents; ++k) {
      // d/dS_k of sum_j |S_j - mean_{i != j} S_i|^2.
      const Vector ds = 2.0 * diff[k] - (2.0 / static_cast<double>(n_agents - 1)) * (diff_sum - diff[k]);
      Vector du = Vector::Zero(post[k].size());
      du.head(s) = ds.cwiseProduct((1.0 - post[k].head(s).array().square()).matrix());
      const Vector dflat = family.agents[k].prefix_weight.transpose() * du + 2.0 * prefix_penalty * flat[k];
      grad->noalias() += dflat * sample.inputs[k].transpose();
    }
  }
  const double n = static_cast<double>(samples.size());
  if (grad) *grad /= n;
  return total / n;
}

Adapter train_adapter(const MockFamily& family, const MlpModel<double>& model, const WeightTable& weights,
                      const SupportEstimate& support, const SurrogateConfig& cfg, SeededRng& rng) {
  cfg.validate();
  Adapter adapter = Adapter::zeros(static_cast<int>(model.latent_width()), family.config.prefix_length,
                                   family.config.embedding_width);
  AdamState<double> adam(cfg.adam);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<SurrogateSample> samples;
    for (int b = 0; b < cfg.batch_tasks; ++b) {
      const Vector task = draw_task(family, rng);
      const Episode e = run_episode(family.agents, model, adapter, weights, support.tau, cfg.rounds, task, &support);
      for (const auto& round : e) {
        SurrogateSample sample;
        sample.task = task;
        for (const auto& r : round.routed) sample.inputs.push_back(padded_values(r, adapter.n_route()));
        samples.push_back(std::move(sample));
      }
    }
    Matrix grad;
    const double loss = surrogate_loss(family, adapter.weight, samples, cfg.prefix_penalty, &grad);
    if (!std::isfinite(loss)) throw NumericError("train_adapter: non-finite surrogate loss at step " + std::to_string(step));
    std::vector<ParamRef<double>> params{adapter.weight};
    std::vector<GradRef<double>> grads{grad};
    adam_step<double>(adam, params, grads);
  }
  return adapter;
}

nlohmann::ordered_json round_to_json(const RoundTrace& round, int episode, const std::string& mode) {
  nlohmann::ordered_json j;
  j["episode"] = episode;
  j["mode"] = mode;
  j["round"] = round.round;
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  for (const auto& s : round.states) states.push_back(vector_to_json(s));
  j["states"] = std::move(states);
  j["latents"] = vector_to_json(round.latents);
  nlohmann::ordered_json routed = nlohmann::ordered_json::array();
  for (const auto& r : round.routed)
    routed.push_back({{"values", vector_to_json(r.values)}, {"sources", r.sources}, {"levels", r.levels}});
  j["routed"] = std::move(routed);
  nlohmann::ordered_json prefixes = nlohmann::ordered_json::array();
  for (const auto& p : round.prefixes) prefixes.push_back(matrix_to_json(p));
  j["prefixes"] = std::move(prefixes);
  j["answers"] = round.answers;
  j["consensus"] = round.consensus;
  return j;
}

}  // namespace thoughtcomm
