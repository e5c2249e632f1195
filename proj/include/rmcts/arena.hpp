#pragma once

// Head-to-head matches, timing benchmarks and the two-arm bandit trace.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmcts/evaluator.hpp"
#include "rmcts/search.hpp"

namespace rmcts {

struct AgentSpec {
  Algorithm algorithm = Algorithm::Rmcts;
  int n_sims = 64;
  double c = 1.0;
  std::string evaluator = "heuristic";
};

std::string agent_label(const AgentSpec& agent);

struct MatchConfig {
  GameConfig game = GameConfig::othello(6);
  AgentSpec a;
  AgentSpec b;
  /// Each opening is played twice, once with each agent moving first.
  int games_per_side = 32;
  std::uint64_t seed = 0;
  LatencyModel latency;
  /// Opening plies sampled from agent A's prior before the agents take over.
  int opening_plies = 2;
  /// Games played at once; 0 means all of them.
  int threads = 0;

  void validate() const;
};

struct GameRecord {
  int pair = 0;
  bool a_first = true;
  double score_a = 0.0;  // final score from agent A's perspective
  int plies = 0;
  double time_a_us = 0.0;
  double time_b_us = 0.0;
  std::uint64_t eval_calls_a = 0;
  std::uint64_t eval_calls_b = 0;
  std::vector<Action> moves;
};

struct MatchReport {
  MatchConfig config;
  std::vector<GameRecord> games;
  double mean_score = 0.0;
  int wins = 0;
  int draws = 0;
  int losses = 0;
  double mean_time_a_us = 0.0;  // per game
  double mean_time_b_us = 0.0;
  /// mean_time_b_us / mean_time_a_us
  double speedup_a_over_b = 0.0;
};

/// Agents' evaluators are built from their ids and wrapped in the latency model.
MatchReport play_match(const MatchConfig& config);
MatchReport play_match(const MatchConfig& config, const Evaluator& eval_a, const Evaluator& eval_b);

/// Recomputes the aggregate fields from `games`.
void summarize(MatchReport& report);

nlohmann::json match_to_json(const MatchReport& report);
// Columns: pair,a_first,score_a,plies,time_a_us,time_b_us,eval_calls_a,eval_calls_b,moves
void write_match_csv(const MatchReport& report, const std::filesystem::path& path);

struct BenchConfig {
  GameConfig game = GameConfig::othello(6);
  std::vector<Algorithm> algorithms{Algorithm::Ucb, Algorithm::Rmcts};
  std::vector<int> sims{32, 64, 128, 256, 512, 1024, 2048};
  double c = 1.0;
  /// Positions searched: one at a time for single-root, jointly for multi-root.
  int roots = 1;
  LatencyModel latency;
  std::string evaluator = "tinynet:random";
  std::uint64_t seed = 0;
};

struct BenchRow {
  Algorithm algorithm = Algorithm::Rmcts;
  int n_sims = 0;
  int roots = 0;
  bool joint = false;
  double wall_time_us = 0.0;      // whole benchmark cell
  double time_per_root_us = 0.0;  // wall_time_us / roots
  double eval_calls = 0.0;        // evaluator calls per root (single) or per joint search (multi)
  double eval_items = 0.0;        // evaluated states per root
  /// UCB time per root divided by this row's time per root, at the same N.
  double speedup_vs_ucb = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchRow> rows;
};

/// Positions the benchmarks search: random play of 4..10 plies from the seed.
std::vector<GameState> bench_positions(const GameConfig& game, int count, std::uint64_t seed);

/// Each of config.roots positions is searched on its own; rows report per-root means.
BenchReport bench_single_root(const BenchConfig& config);
BenchReport bench_single_root(const BenchConfig& config, const Evaluator& evaluator);
/// All positions are searched jointly (one batch per sweep or per depth).
BenchReport bench_multi_root(const BenchConfig& config);
BenchReport bench_multi_root(const BenchConfig& config, const Evaluator& evaluator);

nlohmann::json bench_to_json(const BenchReport& report);
// Columns: algorithm,n_sims,roots,joint,wall_time_us,time_per_root_us,eval_calls,eval_items,speedup_vs_ucb
void write_bench_csv(const BenchReport& report, const std::filesystem::path& path);

struct BanditConfig {
  std::vector<double> p{0.6, 0.4};
  int n_sims = 200;
  double c = 1.0;
  std::uint64_t seed = 0;
};

/// State after `step` arm pulls (the root's own evaluation is not a pull).
struct BanditStep {
  int step = 0;
  int arm = 0;
  double reward = 0.0;
  std::vector<double> q;
  std::vector<int> counts;
  std::vector<double> ucb;  // values the next selection compares
};

std::vector<BanditStep> bandit_trace(const BanditConfig& config);
// Columns: step,arm,reward, then q_i, n_i, ucb_i for each arm i (1-based).
void write_bandit_csv(const std::vector<BanditStep>& trace, const std::filesystem::path& path);

}  // namespace rmcts
