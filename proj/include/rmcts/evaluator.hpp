#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmcts/games.hpp"
#include "rmcts/tiny_net.hpp"

namespace rmcts {

/// Prior value (game-score units, player to move) and prior policy over the full
/// action space. After masking, illegal entries are exactly zero.
struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd policy;
};

/// Zeroes illegal entries and renormalizes; falls back to uniform over the legal
/// actions when they carry no mass. Negative or NaN entries count as zero.
Eigen::VectorXd mask_and_renormalize(const Eigen::Ref<const Eigen::VectorXd>& raw, std::span<const Action> legal);

/// Batched prior provider. Implementations must be deterministic per state and
/// independent of batch composition; searches rely on that for reproducibility.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  /// Throws std::invalid_argument if any state is terminal.
  std::vector<Evaluation> evaluate_batch(std::span<const GameState> states) const;
  Evaluation evaluate(const GameState& state) const;

  std::uint64_t calls() const { return calls_.load(); }
  std::uint64_t items() const { return items_.load(); }
  void reset_counters() const {
    calls_ = 0;
    items_ = 0;
  }

  virtual std::string name() const = 0;

 protected:
  /// Writes value and a raw (unmasked, possibly unnormalized) policy per state.
  virtual void evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const = 0;
  /// True when evaluate_raw already returns masked policies.
  virtual bool output_is_masked() const { return false; }

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
  mutable std::atomic<std::uint64_t> items_{0};
};

class UniformEvaluator final : public Evaluator {
 public:
  std::string name() const override { return "uniform"; }

 protected:
  void evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const override;
};

/// Hand-written static evaluation per game, scaled into score units.
///   Connect-4: open-window counts; policy prefers central columns.
///   Othello: corners, mobility and disc balance; policy from a square-weight table.
///   Dots-and-Boxes: box balance plus capturable boxes; policy avoids third edges.
class HeuristicEvaluator final : public Evaluator {
 public:
  std::string name() const override { return "heuristic"; }

 protected:
  void evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const override;
};

class TinyNetEvaluator final : public Evaluator {
 public:
  explicit TinyNetEvaluator(std::shared_ptr<const ModelCheckpoint> net);
  std::string name() const override { return "tinynet"; }
  const ModelCheckpoint& checkpoint() const { return *net_; }

 protected:
  void evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const override;

 private:
  std::shared_ptr<const ModelCheckpoint> net_;
};

struct LatencyModel {
  double fixed_overhead_us = 0.0;
  double per_item_us = 0.0;
};

/// Sleeps fixed_overhead + per_item * batch size on each call, then delegates.
class LatencyEvaluator final : public Evaluator {
 public:
  LatencyEvaluator(std::shared_ptr<const Evaluator> inner, LatencyModel model);
  std::string name() const override { return inner_->name() + "+latency"; }
  const LatencyModel& model() const { return model_; }

 protected:
  void evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const override;
  bool output_is_masked() const override { return true; }

 private:
  std::shared_ptr<const Evaluator> inner_;
  LatencyModel model_;
};

std::shared_ptr<const Evaluator> with_latency(std::shared_ptr<const Evaluator> inner, LatencyModel model);

inline constexpr int kDefaultHidden = 64;

/// "uniform", "heuristic", "tinynet:<checkpoint path>", or "tinynet:random"
/// (seed-0 initialization with kDefaultHidden units).
std::shared_ptr<const Evaluator> make_evaluator(const std::string& id, const GameConfig& config);

}  // namespace rmcts
