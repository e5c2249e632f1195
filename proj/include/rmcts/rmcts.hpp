#pragma once

// Recursive search with KL-regularized posteriors at every node.
//
// A node afforded N simulations spends one on its own evaluation and splits the
// remaining N - 1 among its actions in proportion to the prior (systematic
// sampling with one uniform offset). Children are searched with their share,
// and the node's value blends its prior value with the posterior-weighted child
// values:
//     v_bar = v0 / N + (N - 1) / N * sum_{a in A} Q(a) pi_bar(a),
// where A is the set of actions that received simulations and pi_bar solves the
// regularized problem over A with budget N - 1.
//
// Two implementations produce bit-identical results:
//   search_rmcts_recursive  depth-first, one evaluator call per node;
//   search_rmcts_bfs        breadth-first over a preallocated node arena, one
//                           evaluator call per depth across all roots.
// Each node draws its sampling offset from a hash of (seed, action path).

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rmcts/search.hpp"

namespace rmcts {

/// Splits n simulations by prior using offset x in [0, 1):
///   count(a_i) = #{k in Z : t_{i-1} <= x + k < t_i},  t_i = n * sum_{j<=i} prior(a_j).
/// Boundaries within 1e-9 * n of an integer are snapped to it.
std::vector<int> assign_simulations(int n, std::span<const double> prior, double x);
std::vector<int> assign_simulations(int n, std::span<const double> prior, Rng& rng);

/// Sampling offset for the node reached from `parent_key` via `action`.
std::uint64_t child_key(std::uint64_t parent_key, Action action);
std::uint64_t root_key(std::uint64_t seed);

/// Posterior over the children of one node and the blended node value.
struct NodePosterior {
  Eigen::VectorXd pi_bar;
  double value = 0.0;
};

/// q and prior are restricted to the actions that received simulations, in
/// ascending action order. `sims` is the node's own budget N >= 2.
NodePosterior combine_children(double v0, int sims, const Eigen::VectorXd& q, const Eigen::VectorXd& prior, double c);

SearchResult search_rmcts_recursive(const GameState& root, const SearchParams& params, const Evaluator& evaluator);

struct RmctsNode {
  GameState state;
  std::uint64_t key = 0;
  int root = 0;
  int parent = -1;
  Action action = -1;
  int depth = 0;
  int sims = 0;
  int first_child = -1;
  int child_count = 0;
  bool terminal = false;
  double v0 = 0.0;
  double prior_from_parent = 0.0;   // pi0(parent, action)
  double q_from_parent = 0.0;       // Q(parent, action) = sgn(parent, this) * value
  double pi_bar_from_parent = 0.0;  // pi_bar(parent, action)
  double value = 0.0;               // v_bar, or the exact score at a terminal
};

/// Breadth-first joint search over a set of roots. Node storage is reserved
/// once (sum of budgets); children of a node are contiguous and always stored
/// after their parent.
class RmctsForest {
 public:
  RmctsForest(std::span<const GameState> roots, const SearchParams& params, const Evaluator& evaluator);

  const std::vector<RmctsNode>& nodes() const { return nodes_; }
  std::size_t capacity() const { return capacity_; }
  /// [begin, end) node ranges per depth.
  const std::vector<std::pair<int, int>>& levels() const { return levels_; }
  MultiSearchResult results() const;

 private:
  void forward(const Evaluator& evaluator);
  void backward();
  int push_node(RmctsNode node);

  SearchParams params_;
  std::size_t root_count_ = 0;
  std::size_t capacity_ = 0;
  std::vector<RmctsNode> nodes_;
  std::vector<Eigen::VectorXd> root_priors_;
  std::vector<std::pair<int, int>> levels_;
  std::vector<SearchStats> root_stats_;
  SearchStats stats_;
};

MultiSearchResult search_rmcts_bfs(std::span<const GameState> roots, const SearchParams& params,
                                   const Evaluator& evaluator);

}  // namespace rmcts
