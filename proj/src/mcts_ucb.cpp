#include "rmcts/mcts_ucb.hpp"

#include <chrono>
#include <limits>
#include <stdexcept>

#include "rmcts/policy_opt.hpp"

namespace rmcts {

namespace {

void check_ucb_params(const SearchParams& params) {
  if (params.n_sims < 2) throw std::invalid_argument("search_ucb: n_sims must be at least 2");
  if (!(params.c > 0.0)) throw std::invalid_argument("search_ucb: c must be positive");
}

}  // namespace

UcbTree::UcbTree(const GameState& root, const SearchParams& params)
    : params_(params), root_(root), pending_state_(root), remaining_(params.n_sims), chance_rng_(mix64(params.seed)) {
  check_ucb_params(params);
  if (root.is_terminal()) throw std::invalid_argument("search_ucb: root is terminal");
}

int UcbTree::select(const UcbNode& node) const {
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.actions.size(); ++i) {
    const double value = ucb(node.q[i], node.prior[i], node.total_n, node.n[i], params_.c);
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(i);
    }
  }
  return best;
}

bool UcbTree::advance() {
  if (awaiting_) throw std::logic_error("UcbTree::advance while an evaluation is pending");
  while (remaining_ > 0) {
    path_.clear();
    if (nodes_.empty()) {
      pending_state_ = root_;
      pending_parent_ = -1;
      awaiting_ = true;
      ++items_;
      return true;
    }
    int current = 0;
    while (true) {
      const UcbNode& node = nodes_[static_cast<std::size_t>(current)];
      const int index = select(node);
      path_.emplace_back(current, index);
      const int next = node.child[static_cast<std::size_t>(index)];
      if (next >= 0) {
        current = next;
        continue;
      }
      GameState leaf = apply(node.state, node.actions[static_cast<std::size_t>(index)]);
      if (leaf.is_terminal()) {
        const double v = sample_terminal_score(leaf, leaf.to_move(), chance_rng_);
        backup(leaf, v);
        --remaining_;
        break;
      }
      pending_state_ = std::move(leaf);
      pending_parent_ = current;
      pending_index_ = index;
      awaiting_ = true;
      ++items_;
      return true;
    }
  }
  return false;
}

void UcbTree::resume(const Evaluation& eval) {
  if (!awaiting_) throw std::logic_error("UcbTree::resume without a pending evaluation");
  UcbNode node;
  node.state = pending_state_;
  node.actions = legal_actions(pending_state_);
  node.prior.reserve(node.actions.size());
  for (Action a : node.actions) node.prior.push_back(eval.policy[a]);
  node.q.assign(node.actions.size(), 0.0);
  node.n.assign(node.actions.size(), 0);
  node.child.assign(node.actions.size(), -1);
  node.v0 = eval.value;

  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  if (pending_parent_ >= 0) {
    nodes_[static_cast<std::size_t>(pending_parent_)].child[static_cast<std::size_t>(pending_index_)] = id;
  }
  backup(pending_state_, eval.value);
  --remaining_;
  ++batches_;
  awaiting_ = false;
}

void UcbTree::backup(const GameState& leaf, double leaf_value) {
  for (const auto& [node_id, index] : path_) {
    UcbNode& node = nodes_[static_cast<std::size_t>(node_id)];
    const double value = sgn_between(node.state, leaf) * leaf_value;
    const auto i = static_cast<std::size_t>(index);
    node.n[i] += 1;
    node.total_n += 1;
    node.q[i] += (value - node.q[i]) / node.n[i];
    if (observer_) observer_(node_id, index, value);
  }
}

SearchResult UcbTree::result() const {
  const int actions = action_space_size(root_.config());
  SearchResult r;
  r.q = Eigen::VectorXd::Zero(actions);
  r.counts.assign(static_cast<std::size_t>(actions), 0);
  Eigen::VectorXd policy = Eigen::VectorXd::Zero(actions);
  if (nodes_.empty()) return r;
  const UcbNode& root = nodes_.front();
  for (std::size_t i = 0; i < root.actions.size(); ++i) {
    const Action a = root.actions[i];
    r.q[a] = root.q[i];
    r.counts[static_cast<std::size_t>(a)] = root.n[i];
    policy[a] = static_cast<double>(root.n[i]);
  }
  if (root.total_n > 0) policy /= static_cast<double>(root.total_n);
  r.value = policy.dot(r.q);
  r.policy = std::move(policy);
  return r;
}

SearchResult search_ucb(const GameState& root, const SearchParams& params, const Evaluator& evaluator) {
  MultiSearchResult multi = search_ucb_multi(std::span<const GameState>(&root, 1), params, evaluator);
  return std::move(multi.results.front());
}

MultiSearchResult search_ucb_multi(std::span<const GameState> roots, const SearchParams& params,
                                   const Evaluator& evaluator) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<UcbTree> trees;
  trees.reserve(roots.size());
  for (const GameState& root : roots) trees.emplace_back(root, params);

  MultiSearchResult out;
  std::vector<std::size_t> waiting;
  std::vector<GameState> batch;
  while (true) {
    waiting.clear();
    batch.clear();
    for (std::size_t i = 0; i < trees.size(); ++i) {
      if (trees[i].advance()) {
        waiting.push_back(i);
        batch.push_back(trees[i].pending_state());
      }
    }
    if (waiting.empty()) break;
    const std::vector<Evaluation> evals = evaluator.evaluate_batch(batch);
    ++out.stats.eval_calls;
    out.stats.eval_items += batch.size();
    for (std::size_t j = 0; j < waiting.size(); ++j) trees[waiting[j]].resume(evals[j]);
  }

  const double wall =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  out.stats.wall_time_us = wall;
  out.results.reserve(trees.size());
  for (const UcbTree& tree : trees) {
    SearchResult r = tree.result();
    r.stats = {tree.batches_joined(), tree.items_requested(), wall};
    out.results.push_back(std::move(r));
  }
  return out;
}

}  // namespace rmcts
