#pragma once

// AlphaZero-style search: UCB selection down the tree, one evaluator call per
// newly reached nonterminal state, running-mean backup of the leaf value.
// Q(s, a) is kept from the perspective of the player to move at s.

#include <functional>
#include <span>
#include <vector>

#include "rmcts/search.hpp"

namespace rmcts {

struct UcbNode {
  GameState state;
  std::vector<Action> actions;  // legal actions, ascending
  std::vector<double> prior;    // pi0 per entry of `actions`
  std::vector<double> q;
  std::vector<int> n;
  std::vector<int> child;       // node index, -1 until visited
  double v0 = 0.0;
  long long total_n = 0;
};

/// One search tree that can suspend whenever it needs an evaluation, so that
/// several trees can share evaluator batches.
class UcbTree {
 public:
  /// Called on every backup step with (node, index into node.actions, value
  /// from the node's player-to-move perspective).
  using BackupObserver = std::function<void(int node, int action_index, double value)>;

  UcbTree(const GameState& root, const SearchParams& params);

  /// Runs simulations until one needs an evaluation or the budget is spent.
  /// Returns true if pending_state() awaits an evaluation.
  bool advance();
  const GameState& pending_state() const { return pending_state_; }
  void resume(const Evaluation& eval);
  bool done() const { return remaining_ == 0; }

  SearchResult result() const;
  const std::vector<UcbNode>& nodes() const { return nodes_; }
  void set_observer(BackupObserver observer) { observer_ = std::move(observer); }

  std::uint64_t items_requested() const { return items_; }
  std::uint64_t batches_joined() const { return batches_; }

 private:
  int select(const UcbNode& node) const;
  void backup(const GameState& leaf, double leaf_value);

  SearchParams params_;
  GameState root_;
  std::vector<UcbNode> nodes_;
  std::vector<std::pair<int, int>> path_;
  GameState pending_state_;
  int pending_parent_ = -1;
  int pending_index_ = -1;
  bool awaiting_ = false;
  int remaining_;
  Rng chance_rng_;
  BackupObserver observer_;
  std::uint64_t items_ = 0;
  std::uint64_t batches_ = 0;
};

/// Single-root search. Requires a nonterminal root and n_sims >= 2.
SearchResult search_ucb(const GameState& root, const SearchParams& params, const Evaluator& evaluator);

/// Interleaves one tree per root: each sweep advances every tree to its next
/// required evaluation, then flushes all requests as one batch.
MultiSearchResult search_ucb_multi(std::span<const GameState> roots, const SearchParams& params,
                                   const Evaluator& evaluator);

}  // namespace rmcts
