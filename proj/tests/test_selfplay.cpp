#include <doctest.h>

#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rmcts/selfplay.hpp"

using namespace rmcts;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rmcts_test_" + name);
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ReplayExample tagged_example(int tag) {
  ReplayExample ex;
  ex.encoding = Eigen::VectorXd::Constant(3, tag);
  ex.target_policy = Eigen::VectorXd::Constant(2, 0.5);
  ex.target_value = -tag;
  return ex;
}

/// Replays each game from the start and checks every example against the
/// position it came from and the game's final score.
void check_backfill(const RolloutConfig& cfg, const RolloutResult& r) {
  std::size_t total = 0;
  for (const CompletedGame& g : r.games) {
    GameState s = GameState::initial(cfg.game);
    std::vector<Player> movers;
    for (std::size_t k = 0; k < g.moves.size(); ++k) {
      const ReplayExample& ex = r.examples[g.first_example + k];
      CHECK(ex.encoding == encode(s));
      CHECK(ex.target_policy.sum() == doctest::Approx(1.0));
      for (Eigen::Index a = 0; a < ex.target_policy.size(); ++a) {
        if (!is_legal(s, static_cast<Action>(a))) CHECK(ex.target_policy[a] == 0.0);
      }
      CHECK(ex.target_policy[g.moves[k]] > 0.0);
      movers.push_back(s.to_move());
      s = apply(s, g.moves[k]);
    }
    REQUIRE(s.is_terminal());
    const auto counts = piece_counts(s);
    double p1_score = g.score_p1;
    if (cfg.game.game == GameKind::DotsAndBoxes) p1_score = counts[0] - counts[1];
    CHECK(g.score_p1 == p1_score);
    for (std::size_t k = 0; k < g.moves.size(); ++k) {
      const double expected = movers[k] == Player::P1 ? p1_score : -p1_score;
      CHECK(r.examples[g.first_example + k].target_value == expected);
    }
    total += g.moves.size();
  }
  CHECK(r.examples.size() == total);
}

}  // namespace

TEST_CASE("rollout targets are back-filled from the final score") {
  RolloutConfig cfg;
  cfg.game = GameConfig::connect4(4, 4, 3);
  cfg.games = 6;
  cfg.parallel = 4;
  cfg.n_sims = 32;
  HeuristicEvaluator heuristic;
  for (Algorithm alg : {Algorithm::Rmcts, Algorithm::Ucb}) {
    cfg.algorithm = alg;
    const RolloutResult r = generate_rollouts(cfg, heuristic);
    CHECK(r.stats.games_started == 6);
    CHECK(r.stats.games_completed == 6);
    REQUIRE(r.games.size() == 6);
    check_backfill(cfg, r);

    // Connect-4 strictly alternates, so decisive targets alternate in sign.
    for (const CompletedGame& g : r.games) {
      for (std::size_t k = 1; k < g.moves.size(); ++k) {
        CHECK(r.examples[g.first_example + k].target_value == -r.examples[g.first_example + k - 1].target_value);
      }
    }
  }
}

TEST_CASE("dots-and-boxes extra turns keep the target sign") {
  RolloutConfig cfg;
  cfg.game = GameConfig::dots_and_boxes(2, 2);
  cfg.games = 8;
  cfg.parallel = 8;
  cfg.n_sims = 16;
  HeuristicEvaluator heuristic;
  const RolloutResult r = generate_rollouts(cfg, heuristic);
  check_backfill(cfg, r);
  int extra_turns = 0;
  for (const CompletedGame& g : r.games) {
    GameState s = GameState::initial(cfg.game);
    for (std::size_t k = 0; k + 1 < g.moves.size(); ++k) {
      const GameState next = apply(s, g.moves[k]);
      const double v0 = r.examples[g.first_example + k].target_value;
      const double v1 = r.examples[g.first_example + k + 1].target_value;
      if (next.to_move() == s.to_move()) {
        ++extra_turns;
        CHECK(v1 == v0);
      } else {
        CHECK(v1 == -v0);
      }
      s = next;
    }
  }
  CHECK(extra_turns > 0);
}

TEST_CASE("moves after the temperature window are the posterior argmax") {
  RolloutConfig cfg;
  cfg.game = GameConfig::othello(6);
  cfg.games = 3;
  cfg.parallel = 3;
  cfg.n_sims = 16;
  cfg.temperature_plies = 4;
  HeuristicEvaluator heuristic;
  const RolloutResult r = generate_rollouts(cfg, heuristic);
  for (const CompletedGame& g : r.games) {
    for (std::size_t k = 4; k < g.moves.size(); ++k) {
      const Eigen::VectorXd& pi = r.examples[g.first_example + k].target_policy;
      Eigen::Index best = 0;
      pi.maxCoeff(&best);
      CHECK(g.moves[k] == static_cast<Action>(best));
    }
  }
}

TEST_CASE("rollouts are deterministic and batched across live games") {
  RolloutConfig cfg;
  cfg.games = 10;
  cfg.parallel = 5;
  UniformEvaluator uniform;
  const RolloutResult a = generate_rollouts(cfg, uniform);
  const RolloutResult b = generate_rollouts(cfg, uniform);
  REQUIRE(a.examples.size() == b.examples.size());
  for (std::size_t i = 0; i < a.games.size(); ++i) CHECK(a.games[i].moves == b.games[i].moves);
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].target_policy == b.examples[i].target_policy);
    CHECK(a.examples[i].target_value == b.examples[i].target_value);
  }
  // RMCTS needs at most one batch per tree depth for all live games together.
  CHECK(a.stats.eval_calls <= a.stats.search_steps * 17);
  CHECK(a.stats.eval_calls < a.stats.eval_items);

  cfg.seed = 1;
  const RolloutResult c = generate_rollouts(cfg, uniform);
  bool differs = c.games.size() != a.games.size();
  for (std::size_t i = 0; !differs && i < a.games.size(); ++i) differs = a.games[i].moves != c.games[i].moves;
  CHECK(differs);
}

TEST_CASE("budgeted rollouts stop on time and drop unfinished games") {
  RolloutConfig cfg;
  cfg.parallel = 4;
  cfg.n_sims = 8;
  UniformEvaluator uniform;
  const RolloutResult r = generate_rollouts(cfg, uniform, 50'000.0);
  CHECK(r.stats.games_completed == static_cast<int>(r.games.size()));
  CHECK(r.stats.games_started >= r.stats.games_completed);
  CHECK(r.stats.games_started - r.stats.games_completed <= cfg.parallel);
  CHECK(r.stats.wall_time_us >= 50'000.0);
  check_backfill(cfg, r);
  CHECK_THROWS_AS(generate_rollouts(cfg, uniform, 0.0), std::invalid_argument);
}

TEST_CASE("rollout config validation") {
  UniformEvaluator uniform;
  RolloutConfig cfg;
  cfg.parallel = 0;
  CHECK_THROWS_AS(generate_rollouts(cfg, uniform), std::invalid_argument);
  cfg = {};
  cfg.game = GameConfig::binary_tree();
  CHECK_THROWS_AS(generate_rollouts(cfg, uniform), std::invalid_argument);
  cfg = {};
  cfg.algorithm = Algorithm::Ucb;
  cfg.n_sims = 1;
  CHECK_THROWS_AS(generate_rollouts(cfg, uniform), std::invalid_argument);
  cfg = {};
  cfg.games = 0;
  CHECK(generate_rollouts(cfg, uniform).examples.empty());
}

TEST_CASE("replay buffer is a FIFO that never exceeds its capacity") {
  Rng rng(7);
  for (std::size_t capacity : {1u, 5u, 64u}) {
    ReplayBuffer buffer(capacity);
    std::deque<int> model;
    int next = 0;
    for (int round = 0; round < 40; ++round) {
      const int n = std::uniform_int_distribution<int>(0, 9)(rng);
      std::vector<ReplayExample> batch;
      for (int k = 0; k < n; ++k) batch.push_back(tagged_example(next++));
      buffer.add(batch);
      for (int k = 0; k < n; ++k) {
        model.push_back(next - n + k);
        if (model.size() > capacity) model.pop_front();
      }
      REQUIRE(buffer.size() == model.size());
      CHECK(buffer.size() <= capacity);
      CHECK(buffer.total_added() == static_cast<std::uint64_t>(next));
      for (std::size_t i = 0; i < model.size(); ++i) CHECK(buffer.at(i).encoding[0] == model[i]);
    }
  }
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("replay sampling is seeded and draws held examples") {
  ReplayBuffer buffer(10);
  Rng empty_rng(0);
  CHECK_THROWS_AS(buffer.sample(1, empty_rng), std::logic_error);
  for (int k = 0; k < 25; ++k) buffer.add(tagged_example(k));
  Rng r1(3);
  Rng r2(3);
  const auto a = buffer.sample(200, r1);
  const auto b = buffer.sample(200, r2);
  std::vector<int> hits(25, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].encoding == b[i].encoding);
    hits[static_cast<std::size_t>(a[i].encoding[0])] += 1;
  }
  for (int k = 0; k < 15; ++k) CHECK(hits[static_cast<std::size_t>(k)] == 0);
  for (int k = 15; k < 25; ++k) CHECK(hits[static_cast<std::size_t>(k)] > 0);
  CHECK(buffer.total_sampled() == 400);
}

TEST_CASE("replay buffer file round-trip and JSON-lines export") {
  ReplayBuffer buffer(4);
  for (int k = 0; k < 6; ++k) buffer.add(tagged_example(k));
  const auto path = temp_path("replay.bin");
  buffer.save(path);
  const ReplayBuffer loaded = ReplayBuffer::load(path);
  CHECK(loaded == buffer);
  CHECK(loaded.total_added() == 6);
  CHECK(loaded.at(0).encoding[0] == 2);

  // Header 8+4+8+8+8, each record 4-byte length then 4+24+4+16+8 bytes.
  const auto bytes = file_bytes(path);
  CHECK(bytes.size() == 36 + 4 * (4 + 56));
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RMCTSRPL");

  auto corrupt = bytes;
  corrupt[0] = 'X';
  const auto bad = temp_path("replay_bad.bin");
  std::ofstream(bad, std::ios::binary).write(reinterpret_cast<const char*>(corrupt.data()),
                                             static_cast<std::streamsize>(corrupt.size()));
  CHECK_THROWS_AS(ReplayBuffer::load(bad), std::runtime_error);
  std::ofstream(bad, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                             static_cast<std::streamsize>(bytes.size() - 3));
  CHECK_THROWS_AS(ReplayBuffer::load(bad), std::runtime_error);

  const auto jsonl = temp_path("replay.jsonl");
  buffer.export_jsonl(jsonl);
  std::ifstream in(jsonl);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("encoding").get<std::vector<double>>() == std::vector<double>(3, buffer.at(i).encoding[0]));
    CHECK(j.at("policy").size() == 2);
    CHECK(j.at("value") == buffer.at(i).target_value);
    ++i;
  }
  CHECK(i == 4);
  for (const auto& p : {path, bad, jsonl}) std::filesystem::remove(p);
}

TEST_CASE("zero training iterations leave the checkpoint unchanged") {
  const auto dir = temp_path("train_zero");
  std::filesystem::remove_all(dir);
  const GameConfig game = GameConfig::connect4(4, 4, 3);
  const auto initial = temp_path("train_zero_initial.bin");
  save_checkpoint(ModelCheckpoint::random(game, 8, 5), initial);

  TrainLoopConfig cfg;
  cfg.rollout.game = game;
  cfg.iterations = 0;
  cfg.initial_checkpoint = initial;
  cfg.out_dir = dir;
  const TrainLoopResult r = train_loop(cfg);
  CHECK(r.metrics.empty());
  CHECK(file_bytes(dir / "checkpoint.bin") == file_bytes(initial));

  std::ifstream metrics(dir / "metrics.csv");
  std::string header;
  std::getline(metrics, header);
  CHECK(header.rfind("iteration,games,examples,buffer_size,loss", 0) == 0);
  std::string extra;
  CHECK_FALSE(std::getline(metrics, extra));

  cfg.rollout.game = GameConfig::othello(6);
  CHECK_THROWS_AS(train_loop(cfg), std::invalid_argument);
  std::filesystem::remove_all(dir);
  std::filesystem::remove(initial);
}

TEST_CASE("training is deterministic, writes metrics and lowers the loss") {
  TrainLoopConfig cfg;
  cfg.rollout.games = 16;
  cfg.rollout.parallel = 16;
  cfg.rollout.n_sims = 16;
  cfg.hidden = 16;
  cfg.iterations = 6;
  cfg.steps_per_iteration = 16;
  cfg.arena_every = 3;
  cfg.arena_games_per_side = 2;
  cfg.checkpoint_every = 2;
  cfg.out_dir = temp_path("train_a");
  const TrainLoopResult a = train_loop(cfg);
  cfg.out_dir = temp_path("train_b");
  const TrainLoopResult b = train_loop(cfg);

  CHECK(a.checkpoint == b.checkpoint);
  CHECK(a.checkpoint.step == 6 * 16);
  REQUIRE(a.metrics.size() == 6);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].loss == b.metrics[i].loss);
    CHECK(a.metrics[i].games == 16);
    CHECK(a.metrics[i].arena_score.has_value() == ((i + 1) % 3 == 0));
  }
  CHECK(a.metrics.back().loss < a.metrics.front().loss);
  CHECK(file_bytes(temp_path("train_a") / "replay.bin") == file_bytes(temp_path("train_b") / "replay.bin"));
  CHECK(load_checkpoint(temp_path("train_a") / "checkpoint.bin") == a.checkpoint);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history.front().step == 0);
  CHECK(a.history.back() == a.checkpoint);
  CHECK(load_checkpoint(temp_path("train_a") / "checkpoint_0004.bin") == a.history[2]);
  CHECK(a.history[2].step == 4 * 16);

  std::ifstream metrics(temp_path("train_a") / "metrics.csv");
  std::string line;
  int rows = -1;
  while (std::getline(metrics, line)) ++rows;
  CHECK(rows == 6);
  CHECK(iteration_to_json(a.metrics[2]).at("arena_score").is_number());
  CHECK(iteration_to_json(a.metrics[0]).at("arena_score").is_null());
  std::filesystem::remove_all(temp_path("train_a"));
  std::filesystem::remove_all(temp_path("train_b"));
}
