#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmcts/evaluator.hpp"
#include "rmcts/games.hpp"

namespace rmcts {

enum class Algorithm : std::int8_t { Ucb, Rmcts };

std::string algorithm_name(Algorithm a);
/// "ucb" / "mcts-ucb" or "rmcts".
Algorithm parse_algorithm(std::string_view name);

struct SearchParams {
  int n_sims = 64;
  double c = 1.0;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::Rmcts;
};

struct SearchStats {
  std::uint64_t eval_calls = 0;
  std::uint64_t eval_items = 0;
  double wall_time_us = 0.0;
};

struct SearchResult {
  /// Posterior over the full action space; absent for a terminal root.
  std::optional<Eigen::VectorXd> policy;
  /// Root value, player-to-move perspective.
  double value = 0.0;
  /// Per-action Q(root, a); zero for actions never explored.
  Eigen::VectorXd q;
  /// Per-action simulation counts N(root, a).
  std::vector<int> counts;
  SearchStats stats;
};

/// Results of a joint search over several roots. `stats` covers the whole
/// search; per-root stats carry the items evaluated for that root's tree and the
/// number of joint batches that tree took part in.
struct MultiSearchResult {
  std::vector<SearchResult> results;
  SearchStats stats;
};

/// Bitwise equality of policy, value, q and counts (stats ignored).
bool same_search_output(const SearchResult& a, const SearchResult& b);

/// argmax of the posterior, ties to the lowest index. Throws on an absent policy.
Action best_action(const SearchResult& r);

/// Dispatches on params.algorithm (UCB: search_ucb, RMCTS: search_rmcts_bfs).
SearchResult search(const GameState& root, const SearchParams& params, const Evaluator& evaluator);
MultiSearchResult search_multi(std::span<const GameState> roots, const SearchParams& params,
                               const Evaluator& evaluator);

}  // namespace rmcts
