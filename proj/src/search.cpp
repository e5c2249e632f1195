#include "rmcts/search.hpp"

#include <cstring>
#include <stdexcept>

#include "rmcts/mcts_ucb.hpp"
#include "rmcts/rmcts.hpp"

namespace rmcts {

namespace {

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

std::string algorithm_name(Algorithm a) { return a == Algorithm::Ucb ? "ucb" : "rmcts"; }

Algorithm parse_algorithm(std::string_view name) {
  if (name == "ucb" || name == "mcts-ucb" || name == "mcts") return Algorithm::Ucb;
  if (name == "rmcts") return Algorithm::Rmcts;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

bool same_search_output(const SearchResult& a, const SearchResult& b) {
  if (a.policy.has_value() != b.policy.has_value()) return false;
  if (a.policy && !same_bits(*a.policy, *b.policy)) return false;
  return std::memcmp(&a.value, &b.value, sizeof(double)) == 0 && same_bits(a.q, b.q) && a.counts == b.counts;
}

Action best_action(const SearchResult& r) {
  if (!r.policy) throw std::invalid_argument("best_action: search returned no policy");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < r.policy->size(); ++i) {
    if ((*r.policy)[i] > (*r.policy)[best]) best = i;
  }
  return static_cast<Action>(best);
}

SearchResult search(const GameState& root, const SearchParams& params, const Evaluator& evaluator) {
  if (params.algorithm == Algorithm::Ucb) return search_ucb(root, params, evaluator);
  return std::move(search_rmcts_bfs(std::span<const GameState>(&root, 1), params, evaluator).results.front());
}

MultiSearchResult search_multi(std::span<const GameState> roots, const SearchParams& params,
                               const Evaluator& evaluator) {
  if (params.algorithm == Algorithm::Ucb) return search_ucb_multi(roots, params, evaluator);
  return search_rmcts_bfs(roots, params, evaluator);
}

}  // namespace rmcts
