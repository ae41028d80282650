#include "thoughtcomm/model_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace thoughtcomm;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("thoughtcomm_io_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("train config json") {
  TrainConfig c;
  c.lambda_sparse = 0.3;
  c.epochs = 7;
  c.seed = 42;
  c.prior_side = PriorSide::decoder;
  c.final_lr_ratio = 0.1;
  c.restarts = 3;
  const TrainConfig d = train_config_from_json(train_config_to_json(c));
  CHECK(train_config_to_json(d).dump() == train_config_to_json(c).dump());
  CHECK(d.prior_side == PriorSide::decoder);

  SUBCASE("missing keys take defaults") {
    const TrainConfig e = train_config_from_json(nlohmann::ordered_json::object());
    CHECK(e.epochs == TrainConfig{}.epochs);
  }
  SUBCASE("unknown key") {
    auto j = train_config_to_json(c);
    j["learning_rat"] = 1.0;
    CHECK_THROWS_AS(train_config_from_json(j), InvalidArgument);
  }
  SUBCASE("invalid value") {
    auto j = train_config_to_json(c);
    j["epochs"] = 0;
    CHECK_THROWS_AS(train_config_from_json(j), InvalidArgument);
  }
  SUBCASE("prior side strings") {
    for (PriorSide s : {PriorSide::automatic, PriorSide::encoder, PriorSide::decoder})
      CHECK(prior_side_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(prior_side_from_string("left"), InvalidArgument);
  }
}

TEST_CASE("model file round trip") {
  SeededRng rng(3);
  ModelFile f;
  f.model = make_mlp<double>(4, 3, 2, 8, rng);
  f.config.seed = 3;
  f.training = {{"best_restart", 0}};
  Adapter a = Adapter::zeros(3, 2, 4);
  a.weight = sample_normal(rng, 8, 3);
  f.adapter = a;

  const auto path = temp_path("model.json");
  write_model(path, f);
  const ModelFile g = read_model(path);
  REQUIRE(g.model.encoder.size() == f.model.encoder.size());
  for (std::size_t i = 0; i < f.model.encoder.size(); ++i) {
    CHECK(g.model.encoder[i].weight == f.model.encoder[i].weight);
    CHECK(g.model.encoder[i].bias == f.model.encoder[i].bias);
    CHECK(g.model.encoder[i].activation == f.model.encoder[i].activation);
  }
  for (std::size_t i = 0; i < f.model.decoder.size(); ++i) CHECK(g.model.decoder[i].weight == f.model.decoder[i].weight);
  REQUIRE(g.adapter.has_value());
  CHECK(g.adapter->weight == a.weight);
  CHECK(g.training == f.training);

  // writing what was read gives the same bytes
  const auto again = temp_path("model2.json");
  write_model(again, g);
  CHECK(slurp(path) == slurp(again));

  SUBCASE("unknown key") {
    auto j = model_to_json(f);
    j["extra"] = 1;
    CHECK_THROWS_AS(model_from_json(j), InvalidArgument);
  }
  SUBCASE("broken shape") {
    auto j = model_to_json(f);
    j["encoder"][0]["bias"].erase(0);
    CHECK_THROWS(model_from_json(j));
  }
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST_CASE("trainlog csv") {
  TrainLog log;
  EpochRecord e;
  e.restart = 1;
  e.epoch = 2;
  e.total = 0.5;
  e.seconds = 123.0;
  log.epochs = {e, e};
  const auto path = temp_path("trainlog.csv");
  write_trainlog_csv(log, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "restart,epoch,recon,penalty,total,jacobian_l1,holdout_recon,holdout_total");
  CHECK(row == "1,2,0,0,0.5,0,0,0");
  int lines = 2;
  while (std::getline(in, row)) ++lines;
  CHECK(lines == 3);
  std::filesystem::remove(path);
}

TEST_CASE("missing file") { CHECK_THROWS(read_json_file(temp_path("does-not-exist.json"))); }
