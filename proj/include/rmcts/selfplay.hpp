#pragma once

// Self-play rollouts, the replay buffer and the training loop.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmcts/evaluator.hpp"
#include "rmcts/search.hpp"
#include "rmcts/tiny_net.hpp"

namespace rmcts {

struct RolloutConfig {
  GameConfig game = GameConfig::connect4(4, 4, 3);
  Algorithm algorithm = Algorithm::Rmcts;
  int n_sims = 64;
  double c = 1.0;
  /// Games to finish. Ignored when a wall-clock budget is given.
  int games = 64;
  /// Live game slots searched jointly; finished slots are refilled.
  int parallel = 64;
  /// Moves are sampled from the posterior for this many plies, then argmax.
  int temperature_plies = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CompletedGame {
  std::uint64_t index = 0;  // order in which the game was started
  std::vector<Action> moves;
  double score_p1 = 0.0;
  /// The game's examples are examples[first_example, first_example + moves.size()).
  std::size_t first_example = 0;
};

struct RolloutStats {
  int games_started = 0;
  int games_completed = 0;
  std::uint64_t search_steps = 0;  // joint searches
  std::uint64_t eval_calls = 0;
  std::uint64_t eval_items = 0;
  double wall_time_us = 0.0;
};

struct RolloutResult {
  /// One example per visited nonterminal state, grouped by game in completion order.
  std::vector<ReplayExample> examples;
  std::vector<CompletedGame> games;
  RolloutStats stats;
};

/// Plays self-play games with every live game searched in one joint search per
/// ply. With `budget_us`, slots keep refilling until the budget runs out and
/// games still in progress are dropped.
RolloutResult generate_rollouts(const RolloutConfig& config, const Evaluator& evaluator,
                                std::optional<double> budget_us = std::nullopt);

/// Fixed-capacity FIFO of training examples.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Evicts the oldest example when full.
  void add(ReplayExample example);
  void add(std::span<const ReplayExample> examples);

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Examples ever added, including evicted ones.
  std::uint64_t total_added() const { return total_added_; }
  /// i = 0 is the oldest example held.
  const ReplayExample& at(std::size_t i) const;

  /// Examples handed out by sample().
  std::uint64_t total_sampled() const { return total_sampled_; }

  /// Uniform draws with replacement. Throws std::logic_error when empty.
  std::vector<ReplayExample> sample(std::size_t count, Rng& rng);

  // Binary file, little-endian:
  //   char[8] "RMCTSRPL", u32 version (1), u64 capacity, u64 total_added, u64 count,
  //   then per example, oldest first: u32 byte length followed by
  //   u32 n, f64[n] encoding, u32 m, f64[m] target_policy, f64 target_value.
  void save(const std::filesystem::path& path) const;
  static ReplayBuffer load(const std::filesystem::path& path);
  /// One JSON object per line: {"encoding": [...], "policy": [...], "value": v}.
  void export_jsonl(const std::filesystem::path& path) const;

  friend bool operator==(const ReplayBuffer& a, const ReplayBuffer& b);

 private:
  std::size_t capacity_;
  std::uint64_t total_added_ = 0;
  std::uint64_t total_sampled_ = 0;
  std::size_t head_ = 0;  // index of the oldest example once the ring is full
  std::vector<ReplayExample> data_;
};

struct TrainLoopConfig {
  RolloutConfig rollout;
  int iterations = 20;
  int hidden = kDefaultHidden;
  /// Starting weights; a seeded random network when absent.
  std::optional<std::filesystem::path> initial_checkpoint;
  std::size_t buffer_capacity = 20000;
  int batch_size = 64;
  int steps_per_iteration = 32;
  double learning_rate = 0.05;
  LatencyModel latency;
  /// Plays the current network against iteration 0 every this many iterations; 0 disables.
  int arena_every = 0;
  int arena_games_per_side = 4;
  /// Also saves checkpoint_<iteration>.bin every this many iterations; 0 saves only the final one.
  int checkpoint_every = 0;
  /// Receives metrics.csv, timing.csv, checkpoint.bin and replay.bin.
  std::filesystem::path out_dir = "train_out";
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationMetrics {
  int iteration = 0;  // 1-based
  int games = 0;
  std::uint64_t examples = 0;
  std::size_t buffer_size = 0;
  double loss = 0.0;  // mean over the iteration's SGD steps, before each update
  double value_loss = 0.0;
  double policy_loss = 0.0;
  std::uint64_t eval_calls = 0;
  double rollout_time_us = 0.0;
  double train_time_us = 0.0;
  std::optional<double> arena_score;  // mean score against iteration 0
};

struct TrainLoopResult {
  ModelCheckpoint checkpoint;
  /// Iteration 0, then every checkpoint_every iterations.
  std::vector<ModelCheckpoint> history;
  std::vector<IterationMetrics> metrics;
};

/// Alternates self-play and SGD on replay samples. After every iteration it
/// appends a row to metrics.csv and the wall times to timing.csv, so metrics.csv
/// is reproducible from the seed. The final checkpoint and buffer are written at
/// the end.
TrainLoopResult train_loop(const TrainLoopConfig& config);

nlohmann::json iteration_to_json(const IterationMetrics& m);

}  // namespace rmcts
