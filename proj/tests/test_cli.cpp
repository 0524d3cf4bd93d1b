#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cnsdiff/cli.hpp"
#include "cnsdiff/config.hpp"

using namespace cnsdiff;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

json tiny_config_json() {
  json j = config_to_json(TrainConfig{});
  j["epochs"] = 1;
  j["batch_size"] = 16;
  j["d"] = 8;
  j["K"] = 1;
  j["hidden"] = 8;
  j["time_dim"] = 4;
  j["env_dim"] = 2;
  j["T"] = 4;
  j["num_envs"] = 2;
  j["eval_every"] = 1;
  j["threads"] = 1;
  return j;
}

std::string synth_spec_json() {
  return R"({
    "num_users": 30, "num_items": 30, "num_envs": 2,
    "preference_rank": 3, "preference_keep_frac": 0.15, "seed": 5,
    "exposure": {"mode": "uniform", "phi_per_env": [0.9, 0.6]}
  })";
}

}  // namespace

TEST_CASE("unknown flags and subcommands exit with code 2") {
  CHECK(run_command({"frobnicate"}) == 2);
  CHECK(run_command({"train", "--no-such-flag", "x"}) == 2);
  CHECK(run_command({}) == 2);
}

TEST_CASE("invalid config values exit with code 2 and name the field") {
  fs::path dir = fresh_dir("cnsdiff_cli_badcfg");
  json j = tiny_config_json();
  j["lambda2"] = -1.0;
  write_file(dir / "config.json", j.dump());
  write_file(dir / "spec.json", synth_spec_json());
  REQUIRE(run_command({"synth", "--spec", (dir / "spec.json").string(), "--out",
                       (dir / "data").string()}) == 0);
  REQUIRE(run_command({"split", "--data", (dir / "data").string(), "--kind", "popularity",
                       "--seed", "1", "--out", (dir / "split.json").string()}) == 0);
  CHECK(run_command({"train", "--data", (dir / "data").string(), "--split",
                     (dir / "split.json").string(), "--config", (dir / "config.json").string(),
                     "--out", (dir / "run").string()}) == 2);

  json j2 = tiny_config_json();
  j2["typo_key"] = 1;
  write_file(dir / "config2.json", j2.dump());
  CHECK(run_command({"train", "--data", (dir / "data").string(), "--split",
                     (dir / "split.json").string(), "--config", (dir / "config2.json").string(),
                     "--out", (dir / "run2").string()}) == 2);
}

TEST_CASE("synth + split + train(epochs=0) writes the expected run directory") {
  fs::path dir = fresh_dir("cnsdiff_cli_run0");
  write_file(dir / "spec.json", synth_spec_json());
  REQUIRE(run_command({"synth", "--spec", (dir / "spec.json").string(), "--out",
                       (dir / "data").string()}) == 0);
  CHECK(fs::exists(dir / "data" / "dataset.json"));
  CHECK(fs::exists(dir / "data" / "preferences.bin"));
  CHECK(fs::exists(dir / "data" / "ground_truth.json"));

  REQUIRE(run_command({"split", "--data", (dir / "data").string(), "--kind", "popularity",
                       "--seed", "3", "--out", (dir / "split.json").string()}) == 0);

  json j = tiny_config_json();
  j["epochs"] = 0;
  write_file(dir / "config.json", j.dump());
  REQUIRE(run_command({"train", "--data", (dir / "data").string(), "--split",
                       (dir / "split.json").string(), "--config", (dir / "config.json").string(),
                       "--out", (dir / "run").string()}) == 0);
  for (const char* f : {"config.json", "metrics.json", "epochs.csv", "fhns.csv",
                        "manifest.json"}) {
    CHECK(fs::exists(dir / "run" / f));
  }
  std::ifstream mf(dir / "run" / "metrics.json");
  json metrics = json::parse(mf);
  REQUIRE(metrics.at("epochs").size() == 1);
  CHECK(metrics.at("epochs")[0].at("epoch") == 0);
  CHECK(metrics.at("epochs")[0].at("loss").is_null());

  // a second run into the same directory trips the lock... the lock is
  // removed at exit, so re-running must succeed instead
  CHECK(run_command({"train", "--data", (dir / "data").string(), "--split",
                     (dir / "split.json").string(), "--config", (dir / "config.json").string(),
                     "--out", (dir / "run").string()}) == 0);
}

TEST_CASE("train + eval + diagnose produce metric and diagnostic artifacts") {
  fs::path dir = fresh_dir("cnsdiff_cli_full");
  write_file(dir / "spec.json", synth_spec_json());
  REQUIRE(run_command({"synth", "--spec", (dir / "spec.json").string(), "--out",
                       (dir / "data").string()}) == 0);
  REQUIRE(run_command({"split", "--data", (dir / "data").string(), "--kind", "popularity",
                       "--seed", "3", "--out", (dir / "split.json").string()}) == 0);
  write_file(dir / "config.json", tiny_config_json().dump());
  REQUIRE(run_command({"train", "--data", (dir / "data").string(), "--split",
                       (dir / "split.json").string(), "--config", (dir / "config.json").string(),
                       "--out", (dir / "run").string()}) == 0);
  CHECK(fs::exists(dir / "run" / "checkpoints" / "best.ckpt"));
  CHECK(fs::exists(dir / "run" / "checkpoints" / "last.ckpt"));

  REQUIRE(run_command({"eval", "--checkpoint", (dir / "run" / "checkpoints" / "best.ckpt").string(),
                       "--data", (dir / "data").string(), "--split", (dir / "split.json").string(),
                       "--groups", "popularity:4", "--out", (dir / "evalout").string()}) == 0);
  CHECK(fs::exists(dir / "evalout" / "eval_metrics.json"));
  CHECK(fs::exists(dir / "evalout" / "grouped.csv"));

  REQUIRE(run_command({"diagnose", "--run", (dir / "run").string(), "--data",
                       (dir / "data").string(), "--split", (dir / "split.json").string()}) == 0);
  CHECK(fs::exists(dir / "run" / "fhns_recomputed.csv"));
  CHECK(fs::exists(dir / "run" / "grouped.csv"));
}

TEST_CASE("grid expansion produces the full cartesian product") {
  fs::path dir = fresh_dir("cnsdiff_cli_grid");
  write_file(dir / "config.json", tiny_config_json().dump());
  REQUIRE(run_command({"grid", "--config", (dir / "config.json").string(), "--vary",
                       "T=[10,20,50,100,200];lambda2=[1e-6,1e-3,5e-2,1e-1,5e-1]", "--out",
                       (dir / "grid").string()}) == 0);
  int count = 0;
  for (const auto& e : fs::directory_iterator(dir / "grid")) {
    if (e.path().extension() == ".json") ++count;
  }
  CHECK(count == 25);
  // expanded configs parse cleanly and carry the varied values
  std::ifstream in(dir / "grid" / "grid_0000.json");
  json j = json::parse(in);
  TrainConfig c = config_from_json(j);
  CHECK((c.T == 10 || c.T == 20 || c.T == 50 || c.T == 100 || c.T == 200));
}

TEST_CASE("gradcheck subcommand passes on the default tiny instance") {
  CHECK(run_command({"gradcheck"}) == 0);
}
