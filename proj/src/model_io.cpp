#include "thoughtcomm/model_io.hpp"

#include "thoughtcomm/json_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace thoughtcomm {

using Json = nlohmann::ordered_json;

std::string to_string(PriorSide side) {
  switch (side) {
    case PriorSide::encoder: return "encoder";
    case PriorSide::decoder: return "decoder";
    default: return "automatic";
  }
}

PriorSide prior_side_from_string(const std::string& s) {
  if (s == "automatic") return PriorSide::automatic;
  if (s == "encoder") return PriorSide::encoder;
  if (s == "decoder") return PriorSide::decoder;
  throw InvalidArgument("unknown prior_side '" + s + "'");
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["lambda_sparse"] = c.lambda_sparse;
  j["jacobian_subsample"] = c.jacobian_subsample;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["learning_rate"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["final_lr_ratio"] = c.final_lr_ratio;
  j["seed"] = c.seed;
  j["latent_dim"] = c.latent_dim;
  j["hidden_layers"] = c.hidden_layers;
  j["hidden_width"] = c.hidden_width;
  j["holdout_fraction"] = c.holdout_fraction;
  j["prior_weight"] = c.prior_weight;
  j["prior_side"] = to_string(c.prior_side);
  j["restarts"] = c.restarts;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
  static const std::set<std::string> known = {
      "lambda_sparse", "jacobian_subsample", "batch_size",  "epochs",   "warmup_epochs",    "learning_rate",
      "beta1",         "beta2",              "adam_eps",    "final_lr_ratio", "seed",       "latent_dim",
      "hidden_layers", "hidden_width",       "holdout_fraction", "prior_weight", "prior_side", "restarts"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw InvalidArgument("training config: unknown key '" + key + "'");
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lambda_sparse", c.lambda_sparse);
    get("jacobian_subsample", c.jacobian_subsample);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("warmup_epochs", c.warmup_epochs);
    get("learning_rate", c.adam.lr);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("adam_eps", c.adam.eps);
    get("final_lr_ratio", c.final_lr_ratio);
    get("seed", c.seed);
    get("latent_dim", c.latent_dim);
    get("hidden_layers", c.hidden_layers);
    get("hidden_width", c.hidden_width);
    get("holdout_fraction", c.holdout_fraction);
    get("prior_weight", c.prior_weight);
    get("restarts", c.restarts);
    if (j.contains("prior_side")) c.prior_side = prior_side_from_string(j.at("prior_side").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

Json layers_to_json(const std::vector<DenseLayer<double>>& layers) {
  Json out = Json::array();
  for (const auto& l : layers) {
    Json layer;
    layer["in"] = l.in();
    layer["out"] = l.out();
    layer["activation"] = to_string(l.activation);
    Json w = Json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layer["weight"] = std::move(w);
    layer["bias"] = vector_to_json(l.bias);
    out.push_back(std::move(layer));
  }
  return out;
}

std::vector<DenseLayer<double>> layers_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("model: layer list must be an array");
  std::vector<DenseLayer<double>> out;
  for (const auto& layer : j) {
    check_keys(layer, {"in", "out", "activation", "weight", "bias"}, "model layer");
    const auto in = layer.at("in").get<Eigen::Index>();
    const auto o = layer.at("out").get<Eigen::Index>();
    if (in < 1 || o < 1) throw InvalidArgument("model: layer widths must be positive");
    const auto& w = layer.at("weight");
    if (!w.is_array() || static_cast<Eigen::Index>(w.size()) != in * o)
      throw InvalidArgument("model: weight array does not match layer shape");
    DenseLayer<double> l;
    l.weight.resize(o, in);
    for (Eigen::Index r = 0; r < o; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * in + c)].get<double>();
    l.bias = vector_from_json<Vector>(layer.at("bias"));
    l.activation = activation_from_string(layer.at("activation").get<std::string>());
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace

Json training_summary(const TrainLog& log) {
  Json j;
  j["best_restart"] = log.best_restart;
  j["best_epoch"] = log.best_epoch;
  j["best_holdout_total"] = log.best_holdout_total;
  j["epochs_run"] = log.epochs.size();
  return j;
}

Json model_to_json(const ModelFile& f) {
  f.model.validate();
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["input_width"] = f.model.input_width();
  j["latent_width"] = f.model.latent_width();
  j["encoder"] = layers_to_json(f.model.encoder);
  j["decoder"] = layers_to_json(f.model.decoder);
  j["train_config"] = train_config_to_json(f.config);
  j["training"] = f.training;
  if (f.adapter) j["adapter"] = adapter_to_json(*f.adapter);
  return j;
}

ModelFile model_from_json(const Json& j) {
  check_keys(j, {"format_version", "input_width", "latent_width", "encoder", "decoder", "train_config", "training", "adapter"},
             "model");
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion)
      throw InvalidArgument("model: unsupported format_version");
    ModelFile f;
    f.model.encoder = layers_from_json(j.at("encoder"));
    f.model.decoder = layers_from_json(j.at("decoder"));
    f.model.validate();
    if (f.model.input_width() != j.at("input_width").get<Eigen::Index>() ||
        f.model.latent_width() != j.at("latent_width").get<Eigen::Index>())
      throw InvalidArgument("model: declared widths do not match layers");
    f.config = train_config_from_json(j.at("train_config"));
    if (j.contains("training")) f.training = j.at("training");
    if (j.contains("adapter")) f.adapter = adapter_from_json(j.at("adapter"));
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("missing " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_model(const std::filesystem::path& path, const ModelFile& file) { write_json_file(path, model_to_json(file)); }

ModelFile read_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw InvalidArgument("cannot write " + path.string());
  std::fprintf(f, "restart,epoch,recon,penalty,total,jacobian_l1,holdout_recon,holdout_total\n");
  for (const auto& e : log.epochs)
    std::fprintf(f, "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.restart, e.epoch, e.recon, e.penalty, e.total,
                 e.jacobian_l1, e.holdout_recon, e.holdout_total);
  std::fclose(f);
}

}  // namespace thoughtcomm
