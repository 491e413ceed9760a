#include <catch_amalgamated.hpp>

#include <sstream>

#include "gazemine/app.hpp"
#include "gazemine/cli.hpp"
#include "support.hpp"

using namespace gazemine;
using gazemine::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gazemine");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Config file for a quick run inside `dir`.
std::string quick_config(const TempDir& dir) {
  const fs::path p = dir / "config.json";
  write_text_file(p, R"({"seed": 3, "store": "runs", "aois": "data/aois.json",
    "mining": {"n_runs": 1, "levels": ["brief"]},
    "lstm": {"epochs": 2, "hidden_dim": 4, "window_len": 16, "stride": 16},
    "difficulty": {"repetitions": 1}})");
  return p.string();
}

}  // namespace

TEST_CASE("usage errors exit 2", "[cli]") {
  const auto none = cli({});
  CHECK(none.code == kExitUsage);
  CHECK(none.err.find("Usage") != std::string::npos);

  const auto unknown = cli({"--bogus", "segment"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  CHECK(unknown.err.find("Usage") != std::string::npos);

  CHECK(cli({"detect", "--k", "-1"}).code == kExitUsage);
  CHECK(cli({"--provider", "carrier-pigeon", "mine"}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"generate"}).code == kExitUsage);  // --out is required

  const auto help = cli({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("predict-difficulty") != std::string::npos);
}

TEST_CASE("missing preconditions exit 3 and name the artifact", "[cli]") {
  TempDir dir("cli-pre");
  const std::string store = (dir / "runs").string();
  const auto empty = cli({"--store", store, "segment"});
  CHECK(empty.code == kExitPrecondition);
  CHECK(empty.err.find("manifest.json") != std::string::npos);

  const auto no_run = cli({"--store", store, "--run-id", "ghost", "mine"});
  CHECK(no_run.code == kExitPrecondition);
  CHECK(no_run.err.find("ghost") != std::string::npos);

  const auto no_input = cli({"--store", store, "ingest", "--input", (dir / "absent.csv").string()});
  CHECK(no_input.code == kExitPrecondition);
  CHECK(no_input.err.find("absent.csv") != std::string::npos);
}

TEST_CASE("a full run through the command line", "[cli]") {
  TempDir dir("cli-run");
  const std::string config = quick_config(dir);
  const auto gen = cli({"--seed", "3", "generate", "--out", (dir / "data").string(), "--experts", "2", "--students",
                        "1", "--noise-rate", "0.05"});
  REQUIRE(gen.code == kExitOk);
  CHECK(fs::exists(dir / "data/gaze.csv"));
  CHECK(read_json_file(dir / "data/manifest.json").at("noise_rows").get<int>() > 0);

  const auto ingest = cli({"--config", config, "--run-id", "r", "ingest", "--input", (dir / "data/gaze.csv").string()});
  REQUIRE(ingest.code == kExitOk);
  CHECK(ingest.out.find("dropped_noise=") != std::string::npos);
  CHECK(RunStore(dir / "runs").load_manifest("r").seed == 3);

  const auto mine_early = cli({"--config", config, "mine"});
  CHECK(mine_early.code == kExitPrecondition);
  CHECK(mine_early.err.find("payloads/horizontal.jsonl") != std::string::npos);

  REQUIRE(cli({"--config", config, "segment"}).code == kExitOk);
  const auto mine = cli({"--config", config, "mine"});
  REQUIRE(mine.code == kExitOk);
  CHECK(mine.out.find("composite\t") != std::string::npos);
  REQUIRE(cli({"--config", config, "score"}).code == kExitOk);

  const auto kappa = cli({"--config", config, "kappa"});
  CHECK(kappa.code == kExitPrecondition);
  CHECK(kappa.err.find("verdicts.jsonl") != std::string::npos);

  const auto simulated = cli({"--config", config, "kappa", "--simulate-expert"});
  REQUIRE(simulated.code == kExitOk);
  CHECK(simulated.out.find("kappa=") != std::string::npos);
  CHECK(simulated.out.find("setting\t4o\to1\tr1") != std::string::npos);

  const auto detect = cli({"--config", config, "detect", "--k", "2"});
  REQUIRE(detect.code == kExitOk);
  CHECK(detect.out.find("threshold=") != std::string::npos);
  const auto predict = cli({"--config", config, "predict-difficulty"});
  REQUIRE(predict.code == kExitOk);
  CHECK(predict.out.find("v(none)") != std::string::npos);
  const auto report = cli({"--config", config, "report"});
  REQUIRE(report.code == kExitOk);
  CHECK(fs::exists(dir / "runs/r" / artifact::summary));

  SECTION("the seed flag beats the config file") {
    REQUIRE(cli({"--config", config, "--seed", "11", "--run-id", "r2", "ingest", "--input",
                 (dir / "data/gaze.csv").string()})
                .code == kExitOk);
    CHECK(RunStore(dir / "runs").load_manifest("r2").seed == 11);
  }
}

TEST_CASE("bad configuration exits 1 with one line", "[cli]") {
  TempDir dir("cli-cfg");
  write_text_file(dir / "c.json", R"({"seeds": 3})");
  const auto r = cli({"--config", (dir / "c.json").string(), "segment"});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("config.seeds") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}
