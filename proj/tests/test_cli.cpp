#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rmcts/cli.hpp"
#include "rmcts/selfplay.hpp"

using namespace rmcts;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// The JSON printed after "resolved config: " on the first line.
json resolved(const Run& r) {
  const std::string prefix = "resolved config: ";
  REQUIRE(r.out.rfind(prefix, 0) == 0);
  return json::parse(r.out.substr(prefix.size(), r.out.find('\n') - prefix.size()));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rmcts_cli_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("solve-policy prints the worked example") {
  const Run r = run({"solve-policy", "--q", "-3,2", "--prior", "0.5,0.5", "--sims", "500", "--c", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pi_bar (0.00445214, 0.995548)") != std::string::npos);
  CHECK(resolved(r).at("command") == "solve-policy");

  const Run j = run({"solve-policy", "--q", "-3,2", "--prior", "0.5,0.5", "--sims", "500", "--format", "json"});
  REQUIRE(j.code == 0);
  const json body = json::parse(j.out.substr(j.out.find("{\n")));
  CHECK(body.at("pi_bar")[0].get<double>() == doctest::Approx(0.00445).epsilon(0.01));
  CHECK(body.at("pi_bar")[1].get<double>() == doctest::Approx(0.996).epsilon(0.001));

  const auto dir = fresh_dir("solve");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "problem.json") << R"({"q": [-3, 2], "prior": [0.5, 0.5], "sims": 500, "c": 1})";
  const Run from_file = run({"solve-policy", "--config", (dir / "problem.json").string()});
  REQUIRE(from_file.code == 0);
  CHECK(from_file.out.find("pi_bar (0.00445214, 0.995548)") != std::string::npos);
  std::filesystem::remove_all(dir);

  CHECK(run({"solve-policy", "--q", "1,2", "--prior", "1"}).code == 2);
  CHECK(run({"solve-policy", "--q", "1,2", "--prior", "0.5,0.5", "--c", "0"}).code == 2);
  CHECK(run({"solve-policy", "--prior", "0.5,0.5"}).code == 2);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  const Run unknown = run({"bench", "--bogus"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  CHECK(run({"bench", "--format", "xml"}).code == 2);
  CHECK(run({"bench", "--roots", "0"}).code == 2);
  CHECK(run({"bench", "--game", "chess"}).code == 2);
  CHECK(run({"bench", "--game", "connect4:9"}).code == 2);
  CHECK(run({"arena", "--algo", "rmcts"}).code == 2);
  CHECK(run({"bandit", "--sims", "abc"}).code == 2);
  CHECK(run({"bandit", "--seed"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"bench", "--help"}).code == 0);
}

TEST_CASE("game specs") {
  CHECK(parse_game_spec("connect4") == GameConfig::connect4());
  CHECK(parse_game_spec("connect4:4x4:3") == GameConfig::connect4(4, 4, 3));
  CHECK(parse_game_spec("connect4:5x4") == GameConfig::connect4(5, 4, 4));
  CHECK(parse_game_spec("othello:6") == GameConfig::othello(6));
  CHECK(parse_game_spec("dots:2x3") == GameConfig::dots_and_boxes(2, 3));
  CHECK_THROWS_AS(parse_game_spec("othello:six"), std::invalid_argument);
  CHECK_THROWS_AS(parse_game_spec("dots:2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_game_spec("tree"), std::invalid_argument);
}

TEST_CASE("bandit writes a CSV trace and identical runs give identical files") {
  const auto a = fresh_dir("bandit_a");
  const auto b = fresh_dir("bandit_b");
  const Run ra = run({"bandit", "--p", "0.6,0.4", "--sims", "200", "--seed", "5", "--out-dir", a.string()});
  const Run rb = run({"bandit", "--p", "0.6,0.4", "--sims", "200", "--seed", "5", "--out-dir", b.string()});
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  const std::string csv = slurp(a / "bandit.csv");
  CHECK(csv == slurp(b / "bandit.csv"));
  CHECK(csv.rfind("step,arm,reward,q_1,n_1,ucb_1,q_2,n_2,ucb_2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 200);

  const Run other = run({"bandit", "--sims", "200", "--seed", "6", "--out-dir", b.string()});
  REQUIRE(other.code == 0);
  CHECK(slurp(b / "bandit.csv") != csv);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("config file values apply unless a flag overrides them") {
  const auto dir = fresh_dir("config");
  std::filesystem::create_directories(dir);
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"seed": 9, "sims": 50, "p": [0.7, 0.2, 0.1], "format": "json"})";
  const Run r = run({"bandit", "--config", cfg.string(), "--sims", "40", "--out-dir", dir.string()});
  REQUIRE(r.code == 0);
  const json resolved_cfg = resolved(r);
  CHECK(resolved_cfg.at("seed") == 9);
  CHECK(resolved_cfg.at("sims") == 40);
  CHECK(resolved_cfg.at("p") == json({0.7, 0.2, 0.1}));
  CHECK(resolved_cfg.at("format") == "json");
  const json trace = json::parse(slurp(dir / "bandit.json"));
  CHECK(trace.at("trace").size() == 39);
  CHECK(trace.at("seed") == 9);

  std::ofstream(cfg) << R"({"nonsense": 1})";
  CHECK(run({"bandit", "--config", cfg.string()}).code == 2);
  std::ofstream(cfg) << "[1]";
  CHECK(run({"bandit", "--config", cfg.string()}).code == 2);
  CHECK(run({"bandit", "--config", (dir / "missing.json").string()}).code == 2);
  std::ofstream(cfg) << R"({"multi": true, "sims": [8], "roots": 2, "evaluator": "uniform", "out": ")" +
                            (dir / "b.csv").string() + "\"}";
  const Run bench = run({"bench", "--config", cfg.string()});
  REQUIRE(bench.code == 0);
  CHECK(resolved(bench).at("multi") == true);
  CHECK(std::filesystem::exists(dir / "b.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("bench and arena write their reports") {
  const auto dir = fresh_dir("bench");
  const Run bench = run({"bench", "--game", "connect4:4x4:3", "--algo", "ucb,rmcts", "--sims", "16,32", "--c", "1",
                         "--roots", "2", "--latency-us", "0", "--seed", "1", "--evaluator", "uniform", "--out-dir",
                         dir.string()});
  REQUIRE(bench.code == 0);
  CHECK(std::count(bench.out.begin(), bench.out.end(), '\n') == 7);
  const std::string csv = slurp(dir / "bench.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  const Run arena = run({"arena", "--game", "connect4:4x4:3", "--algo", "rmcts,ucb", "--sims", "16,8", "--games",
                         "2", "--threads", "1", "--format", "json", "--out", (dir / "a.json").string()});
  REQUIRE(arena.code == 0);
  const json report = json::parse(slurp(dir / "a.json"));
  CHECK(report.at("games").size() == 4);
  CHECK(report.at("config").at("agent_a").at("n_sims") == 16);
  CHECK(report.at("config").at("agent_b").at("n_sims") == 8);
  std::filesystem::remove_all(dir);
}

TEST_CASE("selfplay and train are reproducible from the seed") {
  const auto a = fresh_dir("sp_a");
  const auto b = fresh_dir("sp_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(run({"selfplay", "--games", "4", "--parallel", "2", "--sims", "8", "--seed", "2", "--out-dir",
                 dir.string()})
                .code == 0);
    REQUIRE(run({"train", "--iterations", "2", "--games", "4", "--parallel", "4", "--sims", "8", "--hidden", "8",
                 "--steps", "4", "--seed", "2", "--format", "json", "--out-dir", (dir / "train").string()})
                .code == 0);
  }
  for (const char* file : {"replay.bin", "examples.jsonl", "games.csv", "train/metrics.csv", "train/metrics.json",
                           "train/checkpoint.bin", "train/replay.bin"}) {
    CAPTURE(file);
    CHECK(slurp(a / file) == slurp(b / file));
  }
  CHECK(ReplayBuffer::load(a / "replay.bin").size() > 0);
  const ModelCheckpoint trained = load_checkpoint(a / "train" / "checkpoint.bin");
  CHECK(trained.step == 8);
  CHECK(trained.arch.hidden == 8);

  // Zero iterations starting from that checkpoint leave it as is.
  REQUIRE(run({"train", "--iterations", "0", "--init", (a / "train" / "checkpoint.bin").string(), "--out-dir",
               (a / "again").string()})
              .code == 0);
  CHECK(slurp(a / "again" / "checkpoint.bin") == slurp(a / "train" / "checkpoint.bin"));
  CHECK(run({"train", "--init", (a / "missing.bin").string(), "--out-dir", (a / "x").string()}).code == 1);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}
