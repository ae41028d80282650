#include "thoughtcomm/autoencoder.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace thoughtcomm {

std::string to_string(Activation a) { return a == Activation::leaky ? "leaky" : "linear"; }

Activation activation_from_string(const std::string& s) {
  if (s == "leaky") return Activation::leaky;
  if (s == "linear") return Activation::linear;
  throw InvalidArgument("unknown activation tag '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda_sparse >= 0) || !std::isfinite(lambda_sparse)) throw InvalidArgument("train: lambda_sparse must be >= 0");
  if (jacobian_subsample < 1) throw InvalidArgument("train: jacobian_subsample must be >= 1");
  if (batch_size < jacobian_subsample) throw InvalidArgument("train: batch_size must be >= jacobian_subsample");
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (warmup_epochs < 0) throw InvalidArgument("train: warmup_epochs must be >= 0");
  if (latent_dim < 0 || hidden_layers < 0 || hidden_width < 0) throw InvalidArgument("train: negative width");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) throw InvalidArgument("train: holdout_fraction must lie in [0, 1)");
  if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) || !(adam.eps > 0))
    throw InvalidArgument("train: invalid optimizer hyperparameters");
  if (!(prior_weight >= 0)) throw InvalidArgument("train: prior_weight must be >= 0");
  if (!(final_lr_ratio > 0 && final_lr_ratio <= 1)) throw InvalidArgument("train: final_lr_ratio must lie in (0, 1]");
  if (restarts < 1) throw InvalidArgument("train: restarts must be >= 1");
}

Eigen::Index holdout_begin(Eigen::Index n_samples, double holdout_fraction) {
  const auto held = static_cast<Eigen::Index>(std::llround(holdout_fraction * static_cast<double>(n_samples)));
  return std::max<Eigen::Index>(1, n_samples - held);
}

namespace {

// Rows used to score the held-out penalty term when picking the best epoch.
constexpr int kHoldoutJacobianRows = 64;

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(idx[i]);
  return out;
}

}  // namespace

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  const int span = cfg.epochs - cfg.warmup_epochs;
  if (epoch < cfg.warmup_epochs || span <= 1) return cfg.adam.lr;
  const double t = static_cast<double>(epoch - cfg.warmup_epochs) / static_cast<double>(span - 1);
  const double r = cfg.final_lr_ratio + (1 - cfg.final_lr_ratio) * 0.5 * (1 + std::cos(std::numbers::pi * t));
  return cfg.adam.lr * r;
}

namespace {

// One epoch of minibatch Adam; returns the epoch means of the batch losses.
EpochRecord run_epoch(MlpModel<double>& model, AdamState<double>& adam, const Matrix& states,
                      const std::vector<Eigen::Index>& order, const TrainConfig& cfg, double lambda, int restart, int epoch, TrainLog& log) {
  EpochRecord rec;
  rec.restart = restart;
  rec.epoch = epoch;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
    const Matrix batch = gather_rows(states, order, b, e);
    Gradients<double> g(model);
    const LossParts parts =
        loss_and_grad<double>(model, batch, lambda, cfg.jacobian_subsample, cfg.prior_weight, cfg.prior_side, &g);
    if (!std::isfinite(parts.total)) {
      log.epochs.push_back(rec);
      throw TrainingFailed("train: non-finite loss at epoch " + std::to_string(epoch), log);
    }
    auto params = model.parameters();
    const auto grads = g.refs();
    adam_step<double>(adam, params, grads);
    rec.recon += parts.recon;
    rec.penalty += parts.penalty;
    rec.total += parts.total;
    rec.jacobian_l1 += parts.jacobian_l1;
    ++batches;
  }
  const double n = static_cast<double>(batches);
  rec.recon /= n;
  rec.penalty /= n;
  rec.total /= n;
  rec.jacobian_l1 /= n;
  return rec;
}

}  // namespace

TrainResult train(const Matrix& states, int latent_dim, const TrainConfig& cfg, const MlpModel<double>* initial) {
  cfg.validate();
  if (states.rows() < 1) throw InvalidArgument("train: empty dataset");
  if (latent_dim < 1) throw InvalidArgument("train: latent width must be >= 1");
  if (!states.allFinite()) throw InvalidArgument("train: non-finite states");

  const int n_h = static_cast<int>(states.cols());
  const int hidden = cfg.hidden_width > 0 ? cfg.hidden_width : 4 * std::max(n_h, latent_dim);

  const Eigen::Index n_train = holdout_begin(states.rows(), cfg.holdout_fraction);
  const Matrix holdout = n_train < states.rows() ? Matrix(states.bottomRows(states.rows() - n_train))
                                                 : Matrix(states.topRows(n_train));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  const int first_eligible = cfg.epochs > cfg.warmup_epochs ? cfg.warmup_epochs : 0;

  SeededRng master(cfg.seed);
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    SeededRng rng = master.split();
    SeededRng init_rng = rng.split();
    MlpModel<double> model = make_mlp<double>(n_h, latent_dim, cfg.hidden_layers, hidden, init_rng);
    if (initial) model = *initial;
    AdamState<double> adam(cfg.adam);
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const auto start = std::chrono::steady_clock::now();
      const double lambda = epoch < cfg.warmup_epochs ? 0.0 : cfg.lambda_sparse;
      adam.hyper.lr = scheduled_lr(cfg, epoch);
      rng.shuffle(order);

      EpochRecord rec = run_epoch(model, adam, states, order, cfg, lambda, restart, epoch, result.log);
      const LossParts held = loss_and_grad<double>(model, holdout, cfg.lambda_sparse, kHoldoutJacobianRows,
                                                   cfg.prior_weight, cfg.prior_side, nullptr);
      rec.holdout_recon = held.recon;
      rec.holdout_total = held.total;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.epochs.push_back(rec);
      if (!std::isfinite(held.total) || !std::isfinite(rec.total))
        throw TrainingFailed("train: non-finite loss at epoch " + std::to_string(epoch), result.log);

      if (epoch >= first_eligible && held.total < best) {
        best = held.total;
        result.model = model;
        result.log.best_restart = restart;
        result.log.best_epoch = epoch;
        result.log.best_holdout_total = best;
      }
    }
  }
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& cfg) {
  const int latent = cfg.latent_dim > 0 ? cfg.latent_dim : static_cast<int>(dataset.latents.cols());
  return train(dataset.states, latent, cfg);
}

}  // namespace thoughtcomm
