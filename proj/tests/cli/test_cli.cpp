#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <set>

#include "cli.hpp"
#include "doctest.h"
#include "manifest.hpp"
#include "scorefilter/feature_store.hpp"
#include "scorefilter/jsonl.hpp"
#include "scorefilter/selector.hpp"
#include "scorefilter/stage1.hpp"
#include "support.hpp"

using namespace scorefilter;
using testing::TempDir;

namespace {

std::string str(const std::filesystem::path& p) { return p.string(); }

Json read_json(const std::filesystem::path& p) { return Json::parse(std::ifstream(p)); }

}  // namespace

TEST_CASE("end-to-end pipeline recovers the hard regime") {
  TempDir dir;
  const auto data = dir / "data";
  REQUIRE(cli::run({"gen-synth", "--out", str(data), "--seed", "1"}) == 0);
  REQUIRE(cli::run({"train", "--features", str(data / "features.sffm"), "--tokens",
                    str(data / "tokens.jsonl"), "--meta", str(data / "meta.jsonl"), "--out",
                    str(dir / "train"), "--seed", "1"}) == 0);
  REQUIRE(cli::run({"score", "--scorenet", str(dir / "train/scorenet.json"), "--features",
                    str(data / "features.sffm"), "--meta", str(data / "meta.jsonl"), "--out",
                    str(dir / "score")}) == 0);
  REQUIRE(cli::run({"select", "--difficulty", str(dir / "score/difficulty.jsonl"), "--features",
                    str(data / "features.sffm"), "--meta", str(data / "meta.jsonl"), "--m", "1000",
                    "--no-diversity", "--out", str(dir / "select")}) == 0);

  const auto meta = load_metadata(data / "meta.jsonl");
  std::map<std::string, std::string> regime;
  for (const auto& m : meta) regime[m.id] = *tag_value(m, "regime");
  const auto picks = load_selection(dir / "select/selection.jsonl");
  REQUIRE(picks.size() == 1000);
  std::size_t hard = 0;
  for (const auto& p : picks) hard += regime[p.id] == "1";
  CHECK(hard >= 900);

  for (const char* sub : {"data", "train", "score", "select"}) {
    CHECK(std::filesystem::exists(dir / sub / "manifest.json"));
  }
  const auto manifest = read_json(dir / "train/manifest.json");
  CHECK(manifest["command"] == "train");
  CHECK(manifest["config"]["batch_size"] == 16);
  CHECK(manifest["seeds"]["seed"] == 1);
  CHECK(manifest["outputs"]["scorenet.json"] == cli::sha256_file(dir / "train/scorenet.json"));
  CHECK(manifest["inputs"].size() == 3);
}

TEST_CASE("selecting every sample of a 5-sample dataset returns all ids") {
  TempDir dir;
  const std::vector<InstructionMeta> meta = {
      {"a", 1, {}}, {"b", 2, {}}, {"c", 3, {}}, {"d", 4, {}}, {"e", 5, {}}};
  save_metadata(meta, dir / "meta.jsonl");
  save_features(FeatureMatrix(5, 2, {1, 0, 0, 1, 1, 1, 1, 2, 2, 1}), dir / "f.sffm");
  std::ofstream(dir / "d.jsonl") << "{\"id\":\"a\",\"d\":0.1}\n{\"id\":\"b\",\"d\":0.5}\n"
                                    "{\"id\":\"c\",\"d\":-1}\n{\"id\":\"d\",\"d\":2}\n"
                                    "{\"id\":\"e\",\"d\":0}\n";
  REQUIRE(cli::run({"select", "--difficulty", str(dir / "d.jsonl"), "--features",
                    str(dir / "f.sffm"), "--meta", str(dir / "meta.jsonl"), "--m", "5", "--gamma",
                    "0", "--out", str(dir / "out")}) == 0);
  std::vector<std::string> ids;
  for (const auto& r : load_selection(dir / "out/selection.jsonl")) ids.push_back(r.id);
  CHECK(ids == std::vector<std::string>{"d", "b", "a", "e", "c"});
}

TEST_CASE("train is digest-identical for the same seed") {
  TempDir dir;
  REQUIRE(cli::run({"gen-synth", "--out", str(dir / "data"), "--n", "200", "--heldout", "0"}) == 0);
  for (const char* out : {"a", "b"}) {
    REQUIRE(cli::run({"train", "--features", str(dir / "data/features.sffm"), "--tokens",
                      str(dir / "data/tokens.jsonl"), "--out", str(dir / out), "--seed", "7",
                      "--epochs", "2"}) == 0);
  }
  for (const char* f : {"scorenet.json", "model.sffm", "model.json", "trainlog.csv", "weights.jsonl",
                        "manifest.json"}) {
    CHECK(cli::sha256_file(dir / "a" / f) == cli::sha256_file(dir / "b" / f));
  }
  CHECK_FALSE(std::filesystem::exists(dir / "data/heldout.jsonl"));
}

TEST_CASE("explicit flags override the TOML config, which overrides defaults") {
  TempDir dir;
  REQUIRE(cli::run({"gen-synth", "--out", str(dir / "data"), "--n", "50"}) == 0);
  std::ofstream(dir / "train.toml") << "batch_size = 4\nepochs = 2\nlr_scorenet = 0.5\n";
  REQUIRE(cli::run({"train", "--features", str(dir / "data/features.sffm"), "--tokens",
                    str(dir / "data/tokens.jsonl"), "--config", str(dir / "train.toml"),
                    "--epochs", "1", "--out", str(dir / "out")}) == 0);
  const auto cfg = read_json(dir / "out/manifest.json")["config"];
  CHECK(cfg["batch_size"] == 4);
  CHECK(cfg["epochs"] == 1);
  CHECK(cfg["lr_scorenet"] == 0.5);
  CHECK(cfg["lr_model"] == TrainConfig{}.lr_model);
}

TEST_CASE("exit codes: usage errors 2, data errors 1, help 0") {
  TempDir dir;
  CHECK(cli::run({"select", "--bogus"}) == 2);
  CHECK(cli::run({"nosuchcommand"}) == 2);
  CHECK(cli::run(std::vector<std::string>{}) == 2);
  CHECK(cli::run({"--help"}) == 0);
  CHECK(cli::run({"--version"}) == 0);
  CHECK(cli::run({"select", "--help"}) == 0);

  REQUIRE(cli::run({"gen-synth", "--out", str(dir / "data"), "--n", "20"}) == 0);
  // m larger than the dataset is a validation error from the selector.
  REQUIRE(cli::run({"baseline", "el2n", "--tokens", str(dir / "data/tokens.jsonl"), "--out",
                    str(dir / "el2n")}) == 0);
  CHECK(cli::run({"select", "--difficulty", str(dir / "el2n/scores.jsonl"), "--features",
                  str(dir / "data/features.sffm"), "--meta", str(dir / "data/meta.jsonl"), "--m",
                  "5", "--out", str(dir / "x")}) == 1);  // no "d" key
  std::ofstream(dir / "bad.toml") << "n = -3\n";
  CHECK(cli::run({"gen-synth", "--out", str(dir / "y"), "--config", str(dir / "bad.toml")}) == 1);
}

TEST_CASE("baselines and analyses write their files and manifests") {
  TempDir dir;
  const auto data = dir / "data";
  REQUIRE(cli::run({"gen-synth", "--out", str(data), "--n", "120", "--heldout", "40",
                    "--clusters", "3"}) == 0);
  const auto meta = str(data / "meta.jsonl");
  const auto feats = str(data / "features.sffm");
  const auto tokens = str(data / "tokens.jsonl");

  REQUIRE(cli::run({"baseline", "grand", "--tokens", tokens, "--out", str(dir / "grand"), "--m",
                    "10"}) == 0);
  CHECK(load_selection(dir / "grand/selection.jsonl").size() == 10);
  REQUIRE(cli::run({"baseline", "proto", "--features", feats, "--meta", meta, "--out",
                    str(dir / "proto")}) == 0);
  CHECK(read_json(dir / "proto/manifest.json")["config"]["clusters"] == 11);
  REQUIRE(cli::run({"baseline", "random", "--meta", meta, "--m", "12", "--out",
                    str(dir / "random")}) == 0);
  const auto random_ids = load_selection(dir / "random/selection.jsonl");
  std::set<std::string> unique;
  for (const auto& r : random_ids) unique.insert(r.id);
  CHECK(unique.size() == 12);

  REQUIRE(cli::run({"analyze", "coverage", "--selection", str(dir / "random/selection.jsonl"),
                    "--meta", meta, "--out", str(dir / "cov")}) == 0);
  const auto cov = read_json(dir / "cov/report.json");
  CHECK(cov["metrics"]["selected"] == 12);
  CHECK(cov["metrics"]["clusters_covered"].get<double>() >= 1);

  REQUIRE(cli::run({"retrain", "--tokens", tokens, "--selection", str(dir / "random/selection.jsonl"),
                    "--heldout", str(data / "heldout.jsonl"), "--epochs", "3", "--out",
                    str(dir / "retrain")}) == 0);
  const auto re = read_json(dir / "retrain/retrain.json");
  CHECK(re["selected"] == 12);
  CHECK(re["heldout_loss"].get<double>() > 0);

  REQUIRE(cli::run({"analyze", "sweep", "--n", "150", "--variable", "batch-size", "--values",
                    "4,16", "--m", "30", "--epochs", "2", "--retrain-epochs", "2", "--heldout",
                    "30", "--out", str(dir / "sweep")}) == 0);
  const auto sweep = read_json(dir / "sweep/report.json");
  CHECK(sweep["variable"] == "batch_size");
  CHECK(sweep["rows"].size() == 2);
}
