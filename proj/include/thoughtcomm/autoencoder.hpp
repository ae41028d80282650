#pragma once

// Encoder/decoder MLP pair trained to reconstruct agent states under an L1
// penalty on the decoder Jacobian. Forward passes, Jacobians and gradients
// are analytic and templated on the scalar type.

#include "thoughtcomm/numerics.hpp"
#include "thoughtcomm/synthgen.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace thoughtcomm {

enum class Activation { leaky, linear };

inline constexpr double kLeakySlope = 0.2;
// Smoothing constant of the absolute value sqrt(x^2 + eps).
inline constexpr double kAbsSmoothing = 1e-8;
// Added to the diagonal of J^T J before the log-determinant.
inline constexpr double kLogdetFloor = 1e-2;

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weight;  // out x in
  VectorX<Scalar> bias;    // out
  Activation activation = Activation::linear;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

template <typename Scalar>
struct MlpModel {
  std::vector<DenseLayer<Scalar>> encoder;
  std::vector<DenseLayer<Scalar>> decoder;

  Eigen::Index input_width() const { return encoder.front().in(); }
  Eigen::Index latent_width() const { return encoder.back().out(); }

  // Throws InvalidArgument if widths do not chain or the decoder does not
  // map back to the input width.
  void validate() const {
    auto chain = [](const std::vector<DenseLayer<Scalar>>& layers, const char* name) {
      if (layers.empty()) throw InvalidArgument(std::string("MlpModel: empty ") + name);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].bias.size() != layers[i].out())
          throw InvalidArgument(std::string("MlpModel: bias width mismatch in ") + name);
        if (i > 0 && layers[i].in() != layers[i - 1].out())
          throw InvalidArgument(std::string("MlpModel: widths do not chain in ") + name);
      }
    };
    chain(encoder, "encoder");
    chain(decoder, "decoder");
    if (decoder.front().in() != latent_width()) throw InvalidArgument("MlpModel: decoder input != latent width");
    if (decoder.back().out() != input_width()) throw InvalidArgument("MlpModel: decoder output != input width");
  }

  // Parameters in the fixed order encoder (W, b)..., decoder (W, b)....
  std::vector<ParamRef<Scalar>> parameters() {
    std::vector<ParamRef<Scalar>> out;
    for (auto* stack : {&encoder, &decoder})
      for (auto& l : *stack) {
        out.emplace_back(l.weight);
        out.emplace_back(l.bias);
      }
    return out;
  }
};

template <typename Scalar>
Scalar activate(Scalar x, Activation a) {
  if (a == Activation::leaky) return x > 0 ? x : Scalar(kLeakySlope) * x;
  return x;
}

template <typename Scalar>
Scalar activation_slope(Scalar x, Activation a) {
  if (a == Activation::leaky) return x > 0 ? Scalar(1) : Scalar(kLeakySlope);
  return Scalar(1);
}

/// Per-layer pre-activations and outputs of a batched pass (rows = samples).
template <typename Scalar>
struct ForwardCache {
  std::vector<MatrixX<Scalar>> pre;
  std::vector<MatrixX<Scalar>> post;  // post[0] is the input
};

template <typename Scalar>
MatrixX<Scalar> forward_layers(const std::vector<DenseLayer<Scalar>>& layers, const MatrixX<Scalar>& input,
                               ForwardCache<Scalar>* cache = nullptr) {
  MatrixX<Scalar> x = input;
  if (cache) cache->post.push_back(x);
  for (const auto& layer : layers) {
    MatrixX<Scalar> pre = (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    x = pre.unaryExpr([&](Scalar v) { return activate(v, layer.activation); });
    if (cache) {
      cache->pre.push_back(std::move(pre));
      cache->post.push_back(x);
    }
  }
  return x;
}

template <typename Scalar>
MatrixX<Scalar> encode(const MlpModel<Scalar>& model, const MatrixX<Scalar>& states) {
  if (states.cols() != model.input_width()) throw InvalidArgument("encode: state width does not match model");
  return forward_layers(model.encoder, states);
}

template <typename Scalar>
MatrixX<Scalar> decode(const MlpModel<Scalar>& model, const MatrixX<Scalar>& latents) {
  if (latents.cols() != model.latent_width()) throw InvalidArgument("decode: latent width does not match model");
  return forward_layers(model.decoder, latents);
}

/// Exact decoder Jacobian W_L D_{L-1} W_{L-1} ... D_1 W_1 at one latent point.
template <typename Scalar>
MatrixX<Scalar> decoder_jacobian(const MlpModel<Scalar>& model, const VectorX<Scalar>& z) {
  if (z.size() != model.latent_width()) throw InvalidArgument("decoder_jacobian: latent width mismatch");
  VectorX<Scalar> x = z;
  MatrixX<Scalar> jac = MatrixX<Scalar>::Identity(z.size(), z.size());
  for (const auto& layer : model.decoder) {
    const VectorX<Scalar> pre = layer.weight * x + layer.bias;
    const VectorX<Scalar> slope = pre.unaryExpr([&](Scalar v) { return activation_slope(v, layer.activation); });
    jac = slope.asDiagonal() * (layer.weight * jac);
    x = pre.unaryExpr([&](Scalar v) { return activate(v, layer.activation); });
  }
  return jac;
}

// Which network's Jacobian carries the volume term of the latent likelihood.
// automatic picks the encoder when state and latent widths agree.
enum class PriorSide { automatic, encoder, decoder };

struct TrainConfig {
  double lambda_sparse = 0.01;
  int jacobian_subsample = 8;
  int batch_size = 256;
  int epochs = 60;
  int warmup_epochs = 10;
  AdamHyper adam{};
  std::uint64_t seed = 0;
  // 0 means "use the dataset's latent count".
  int latent_dim = 0;
  int hidden_layers = 2;
  // 0 means 4 * max(n_h, latent_dim).
  int hidden_width = 0;
  double holdout_fraction = 0.1;
  // Weight of the latent negative log-likelihood under a Laplace(0,1) prior
  // (see PriorSide), counted inside the penalty and scaled by lambda_sparse.
  double prior_weight = 1.0;
  PriorSide prior_side = PriorSide::automatic;
  // Learning rate decays on a cosine from adam.lr to adam.lr * final_lr_ratio
  // over the post-warmup epochs.
  double final_lr_ratio = 1.0;
  // Independent initializations; the one with the lowest held-out total wins.
  int restarts = 1;

  void validate() const;
};

struct LossParts {
  double total = 0;
  double recon = 0;
  double penalty = 0;
  // Mean over subsampled rows of sum |J| (smoothed), before scaling.
  double jacobian_l1 = 0;
  // Latent likelihood term, before scaling.
  double prior_nll = 0;
};

template <typename Scalar>
Scalar smoothed_abs(Scalar x) {
  return std::sqrt(x * x + Scalar(kAbsSmoothing));
}

template <typename Scalar>
struct Gradients {
  std::vector<MatrixX<Scalar>> encoder_weight, decoder_weight;
  std::vector<VectorX<Scalar>> encoder_bias, decoder_bias;

  // Same order as MlpModel::parameters().
  std::vector<GradRef<Scalar>> refs() const {
    std::vector<GradRef<Scalar>> out;
    for (std::size_t i = 0; i < encoder_weight.size(); ++i) {
      out.emplace_back(encoder_weight[i]);
      out.emplace_back(encoder_bias[i]);
    }
    for (std::size_t i = 0; i < decoder_weight.size(); ++i) {
      out.emplace_back(decoder_weight[i]);
      out.emplace_back(decoder_bias[i]);
    }
    return out;
  }

  explicit Gradients(const MlpModel<Scalar>& m) {
    for (const auto& l : m.encoder) {
      encoder_weight.push_back(MatrixX<Scalar>::Zero(l.out(), l.in()));
      encoder_bias.push_back(VectorX<Scalar>::Zero(l.out()));
    }
    for (const auto& l : m.decoder) {
      decoder_weight.push_back(MatrixX<Scalar>::Zero(l.out(), l.in()));
      decoder_bias.push_back(VectorX<Scalar>::Zero(l.out()));
    }
  }
};

namespace detail {

// Backprop through `layers` given d(loss)/d(output); accumulates parameter
// gradients and returns d(loss)/d(input).
template <typename Scalar>
MatrixX<Scalar> backward_layers(const std::vector<DenseLayer<Scalar>>& layers, const ForwardCache<Scalar>& cache,
                                MatrixX<Scalar> upstream, std::vector<MatrixX<Scalar>>& dw,
                                std::vector<VectorX<Scalar>>& db) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const MatrixX<Scalar> slope =
        cache.pre[li].unaryExpr([&](Scalar v) { return activation_slope(v, layer.activation); });
    const MatrixX<Scalar> dpre = upstream.cwiseProduct(slope);
    dw[li].noalias() += dpre.transpose() * cache.post[li];
    db[li] += dpre.colwise().sum().transpose();
    upstream = dpre * layer.weight;
  }
  return upstream;
}

// Jacobian of `layers` at batch row r, from cached pre-activations.
template <typename Scalar>
MatrixX<Scalar> cached_jacobian(const std::vector<DenseLayer<Scalar>>& layers, const ForwardCache<Scalar>& cache,
                                Eigen::Index r) {
  MatrixX<Scalar> acc = MatrixX<Scalar>::Identity(layers.front().in(), layers.front().in());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const VectorX<Scalar> slope =
        cache.pre[l].row(r).transpose().unaryExpr([&](Scalar v) { return activation_slope(v, layers[l].activation); });
    acc = slope.asDiagonal() * (layers[l].weight * acc);
  }
  return acc;
}

// Given G = d(loss)/dJ for J = S_L W_L ... S_1 W_1 at batch row r, adds
// d(loss)/dW_l with the slopes S_l held fixed.
template <typename Scalar>
void jacobian_backward(const std::vector<DenseLayer<Scalar>>& layers, const ForwardCache<Scalar>& cache,
                       Eigen::Index r, MatrixX<Scalar> upstream, std::vector<MatrixX<Scalar>>& dw) {
  const std::size_t depth = layers.size();
  // Right products R_l = S_{l-1} W_{l-1} ... S_1 W_1 (R_0 = I).
  std::vector<MatrixX<Scalar>> right(depth);
  std::vector<VectorX<Scalar>> slopes(depth);
  MatrixX<Scalar> acc = MatrixX<Scalar>::Identity(layers.front().in(), layers.front().in());
  for (std::size_t l = 0; l < depth; ++l) {
    right[l] = acc;
    slopes[l] =
        cache.pre[l].row(r).transpose().unaryExpr([&](Scalar v) { return activation_slope(v, layers[l].activation); });
    acc = slopes[l].asDiagonal() * (layers[l].weight * acc);
  }
  for (std::size_t l = depth; l-- > 0;) {
    const MatrixX<Scalar> dpre = slopes[l].asDiagonal() * upstream;
    dw[l].noalias() += dpre * right[l].transpose();
    upstream = layers[l].weight.transpose() * dpre;
  }
}

// log det(M) and M^-1 for symmetric positive definite M; +inf and zeros when
// the factorization fails.
template <typename Scalar>
Scalar spd_logdet(const MatrixX<Scalar>& m, MatrixX<Scalar>& inverse) {
  Eigen::LLT<MatrixX<Scalar>> llt(m);
  if (llt.info() != Eigen::Success) {
    inverse = MatrixX<Scalar>::Zero(m.rows(), m.cols());
    return std::numeric_limits<Scalar>::infinity();
  }
  inverse = llt.solve(MatrixX<Scalar>::Identity(m.rows(), m.cols()));
  return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Loss and (optionally) its gradient. The Jacobian term is evaluated on the
/// first min(jacobian_subsample, rows) rows of the batch. Activation slopes
/// are treated as locally constant, which is exact away from kinks.
template <typename Scalar>
LossParts loss_and_grad(const MlpModel<Scalar>& model, const MatrixX<Scalar>& batch, double lambda_sparse,
                        int jacobian_subsample, double prior_weight, PriorSide prior_side, Gradients<Scalar>* grads) {
  if (batch.rows() < 1) throw InvalidArgument("loss: empty batch");
  if (batch.cols() != model.input_width()) throw InvalidArgument("loss: state width does not match model");
  const Scalar n = static_cast<Scalar>(batch.rows());
  const Scalar lambda = static_cast<Scalar>(lambda_sparse);

  ForwardCache<Scalar> enc_cache, dec_cache;
  const MatrixX<Scalar> latents = forward_layers(model.encoder, batch, &enc_cache);
  const MatrixX<Scalar> recon = forward_layers(model.decoder, latents, &dec_cache);
  const MatrixX<Scalar> residual = recon - batch;

  LossParts parts;
  parts.recon = static_cast<double>(residual.squaredNorm() / n);

  const Eigen::Index n_sub = std::min<Eigen::Index>(jacobian_subsample, batch.rows());
  const bool want_penalty = lambda_sparse > 0 || !grads;
  const bool want_prior = want_penalty && prior_weight > 0;
  const bool encoder_side = prior_side == PriorSide::encoder ||
                            (prior_side == PriorSide::automatic && model.input_width() == model.latent_width());
  std::vector<MatrixX<Scalar>> jacs, prior_jacs, gram_inv;
  if (want_penalty) {
    Scalar l1 = 0;
    Scalar logdet = 0;
    for (Eigen::Index r = 0; r < n_sub; ++r) {
      jacs.push_back(detail::cached_jacobian(model.decoder, dec_cache, r));
      l1 += jacs.back().unaryExpr([](Scalar v) { return smoothed_abs(v); }).sum();
      if (!want_prior) continue;
      MatrixX<Scalar> inv;
      if (encoder_side) {
        prior_jacs.push_back(detail::cached_jacobian(model.encoder, enc_cache, r));
        const MatrixX<Scalar> gram = prior_jacs.back() * prior_jacs.back().transpose();
        logdet -= detail::spd_logdet(gram, inv);
      } else {
        MatrixX<Scalar> gram = jacs.back().transpose() * jacs.back();
        gram.diagonal().array() += static_cast<Scalar>(kLogdetFloor);
        logdet += detail::spd_logdet(gram, inv);
      }
      gram_inv.push_back(std::move(inv));
    }
    parts.jacobian_l1 = static_cast<double>(l1 / static_cast<Scalar>(n_sub));
    if (want_prior) {
      const Scalar abs_mean = latents.unaryExpr([](Scalar v) { return smoothed_abs(v); }).sum() / n;
      parts.prior_nll = static_cast<double>(abs_mean + Scalar(0.5) * logdet / static_cast<Scalar>(n_sub));
    }
  }
  parts.penalty = lambda_sparse * (parts.jacobian_l1 + (want_prior ? prior_weight * parts.prior_nll : 0.0));
  parts.total = parts.recon + parts.penalty;
  if (!grads) return parts;

  // Reconstruction path.
  MatrixX<Scalar> upstream = (Scalar(2) / n) * residual;
  MatrixX<Scalar> dlatent =
      detail::backward_layers(model.decoder, dec_cache, upstream, grads->decoder_weight, grads->decoder_bias);

  if (lambda_sparse > 0) {
    const Scalar scale = lambda / static_cast<Scalar>(n_sub);
    const Scalar prior_scale = scale * static_cast<Scalar>(prior_weight);
    if (want_prior) {
      const Scalar c = lambda * static_cast<Scalar>(prior_weight) / n;
      dlatent += c * latents.unaryExpr([](Scalar v) { return v / smoothed_abs(v); });
    }
    for (Eigen::Index r = 0; r < n_sub; ++r) {
      MatrixX<Scalar> g = scale * jacs[r].unaryExpr([](Scalar v) { return v / smoothed_abs(v); });
      // d/dJ of 0.5 logdet(J^T J + floor I) is J (J^T J + floor I)^-1.
      if (want_prior && !encoder_side) g += prior_scale * (jacs[r] * gram_inv[r]);
      detail::jacobian_backward(model.decoder, dec_cache, r, std::move(g), grads->decoder_weight);
      // d/dE of -0.5 logdet(E E^T) is -(E E^T)^-1 E.
      if (want_prior && encoder_side)
        detail::jacobian_backward(model.encoder, enc_cache, r, MatrixX<Scalar>(-prior_scale * (gram_inv[r] * prior_jacs[r])),
                                  grads->encoder_weight);
    }
  }

  detail::backward_layers(model.encoder, enc_cache, dlatent, grads->encoder_weight, grads->encoder_bias);
  return parts;
}

template <typename Scalar>
LossParts loss(const MlpModel<Scalar>& model, const MatrixX<Scalar>& batch, const TrainConfig& cfg) {
  return loss_and_grad<Scalar>(model, batch, cfg.lambda_sparse, cfg.jacobian_subsample, cfg.prior_weight, cfg.prior_side, nullptr);
}

template <typename Scalar>
Gradients<Scalar> grad(const MlpModel<Scalar>& model, const MatrixX<Scalar>& batch, const TrainConfig& cfg) {
  Gradients<Scalar> g(model);
  loss_and_grad<Scalar>(model, batch, cfg.lambda_sparse, cfg.jacobian_subsample, cfg.prior_weight, cfg.prior_side, &g);
  return g;
}

/// Smallest |pre-activation| over every leaky unit touched by a batch pass.
template <typename Scalar>
Scalar activation_margin(const MlpModel<Scalar>& model, const MatrixX<Scalar>& batch) {
  ForwardCache<Scalar> enc, dec;
  const MatrixX<Scalar> latents = forward_layers(model.encoder, batch, &enc);
  forward_layers(model.decoder, latents, &dec);
  Scalar margin = std::numeric_limits<Scalar>::infinity();
  auto scan = [&](const std::vector<DenseLayer<Scalar>>& layers, const ForwardCache<Scalar>& c) {
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].activation == Activation::leaky) margin = std::min(margin, c.pre[l].cwiseAbs().minCoeff());
  };
  scan(model.encoder, enc);
  scan(model.decoder, dec);
  return margin;
}

/// Leaky hidden layers and a linear output layer, He-scaled normal weights,
/// zero biases. Draw order: encoder layers then decoder layers, each weight
/// column-major.
template <typename Scalar = double>
MlpModel<Scalar> make_mlp(int input_width, int latent_width, int hidden_layers, int hidden_width, SeededRng& rng) {
  if (input_width < 1 || latent_width < 1 || hidden_layers < 0 || (hidden_layers > 0 && hidden_width < 1))
    throw InvalidArgument("make_mlp: invalid widths");
  auto stack = [&](int in, int out) {
    std::vector<DenseLayer<Scalar>> layers;
    int width = in;
    for (int l = 0; l <= hidden_layers; ++l) {
      const bool last = l == hidden_layers;
      const int next = last ? out : hidden_width;
      const double gain = last ? 1.0 : std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
      DenseLayer<Scalar> layer;
      layer.weight = sample_normal<Scalar>(rng, next, width, static_cast<Scalar>(gain / std::sqrt(double(width))));
      layer.bias = VectorX<Scalar>::Zero(next);
      layer.activation = last ? Activation::linear : Activation::leaky;
      layers.push_back(std::move(layer));
      width = next;
    }
    return layers;
  };
  MlpModel<Scalar> m;
  m.encoder = stack(input_width, latent_width);
  m.decoder = stack(latent_width, input_width);
  return m;
}

struct EpochRecord {
  int restart = 0;
  int epoch = 0;
  double recon = 0;
  double penalty = 0;
  double total = 0;
  double jacobian_l1 = 0;
  double holdout_recon = 0;
  double holdout_total = 0;
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_restart = -1;
  int best_epoch = -1;
  double best_holdout_total = 0;
};

struct TrainingFailed : NumericError {
  TrainingFailed(const std::string& what, TrainLog log) : NumericError(what), log(std::move(log)) {}
  TrainLog log;
};

struct TrainResult {
  MlpModel<double> model;
  TrainLog log;
};

/// Minibatch Adam on the first (1 - holdout_fraction) rows; the Jacobian
/// penalty switches on after warmup_epochs. Returns the parameters of the
/// post-warmup epoch with the lowest held-out total loss over all restarts.
TrainResult train(const Matrix& states, int latent_dim, const TrainConfig& cfg,
                  const MlpModel<double>* initial = nullptr);
TrainResult train(const Dataset& dataset, const TrainConfig& cfg);

/// Learning rate used during `epoch`.
double scheduled_lr(const TrainConfig& cfg, int epoch);

/// Held-out rows used for evaluation given the training split rule.
Eigen::Index holdout_begin(Eigen::Index n_samples, double holdout_fraction);

}  // namespace thoughtcomm
