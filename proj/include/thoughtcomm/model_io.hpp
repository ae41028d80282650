#pragma once

// model.json, trainlog.csv and training-config JSON.

#include "thoughtcomm/autoencoder.hpp"
#include "thoughtcomm/routing.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace thoughtcomm {

inline constexpr int kModelFormatVersion = 1;

std::string to_string(PriorSide side);
PriorSide prior_side_from_string(const std::string& s);

/// Every field is written. Reading fills absent fields with defaults and
/// rejects unknown keys, then validates.
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

struct ModelFile {
  MlpModel<double> model;
  TrainConfig config;
  nlohmann::ordered_json training = nlohmann::ordered_json::object();
  std::optional<Adapter> adapter;
};

/// Layers carry their shape, activation tag, row-major weights and bias.
nlohmann::ordered_json model_to_json(const ModelFile& file);
ModelFile model_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json training_summary(const TrainLog& log);

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::ordered_json read_json_file(const std::filesystem::path& path);

void write_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile read_model(const std::filesystem::path& path);

/// One row per epoch: restart, epoch, recon, penalty, total, jacobian_l1,
/// holdout_recon, holdout_total. Wall-clock time is left out so reruns give
/// identical bytes.
void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path);

}  // namespace thoughtcomm
