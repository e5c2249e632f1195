#include "rmcts/rmcts.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rmcts/policy_opt.hpp"

namespace rmcts {

namespace {

double snap(double t, int n) {
  const double nearest = std::round(t);
  return std::abs(t - nearest) <= 1e-9 * std::max(1, n) ? nearest : t;
}

void check_rmcts_params(const SearchParams& params) {
  if (params.n_sims < 1) throw std::invalid_argument("rmcts: n_sims must be at least 1");
  if (!(params.c > 0.0)) throw std::invalid_argument("rmcts: c must be positive");
}

struct Outcome {
  double value = 0.0;
  std::optional<Eigen::VectorXd> policy;
  Eigen::VectorXd q;
  std::vector<int> counts;
};

Outcome recurse(const GameState& s, int sims, std::uint64_t key, const SearchParams& params,
                const Evaluator& evaluator, SearchStats& stats) {
  const int actions = action_space_size(s.config());
  Outcome out;
  out.q = Eigen::VectorXd::Zero(actions);
  out.counts.assign(static_cast<std::size_t>(actions), 0);
  if (s.is_terminal()) {
    out.value = terminal_score(s, s.to_move());
    return out;
  }
  Evaluation eval = evaluator.evaluate(s);
  ++stats.eval_calls;
  ++stats.eval_items;
  if (sims == 1) {
    out.value = eval.value;
    out.policy = std::move(eval.policy);
    return out;
  }

  out.counts = assign_simulations(sims - 1, std::span<const double>(eval.policy.data(), actions),
                                  unit_interval(key));
  std::vector<Action> explored;
  for (Action a = 0; a < actions; ++a) {
    if (out.counts[static_cast<std::size_t>(a)] > 0) explored.push_back(a);
  }
  Eigen::VectorXd q(static_cast<Eigen::Index>(explored.size()));
  Eigen::VectorXd prior(static_cast<Eigen::Index>(explored.size()));
  for (std::size_t i = 0; i < explored.size(); ++i) {
    const Action a = explored[i];
    const GameState t = apply(s, a);
    const Outcome child = recurse(t, out.counts[static_cast<std::size_t>(a)], child_key(key, a), params, evaluator, stats);
    q[static_cast<Eigen::Index>(i)] = sgn_between(s, t) * child.value;
    prior[static_cast<Eigen::Index>(i)] = eval.policy[a];
  }
  const NodePosterior post = combine_children(eval.value, sims, q, prior, params.c);
  Eigen::VectorXd policy = Eigen::VectorXd::Zero(actions);
  for (std::size_t i = 0; i < explored.size(); ++i) {
    policy[explored[i]] = post.pi_bar[static_cast<Eigen::Index>(i)];
    out.q[explored[i]] = q[static_cast<Eigen::Index>(i)];
  }
  out.value = post.value;
  out.policy = std::move(policy);
  return out;
}

}  // namespace

std::vector<int> assign_simulations(int n, std::span<const double> prior, double x) {
  if (n < 0) throw std::invalid_argument("assign_simulations: n must be non-negative");
  if (!(x >= 0.0 && x < 1.0)) throw std::invalid_argument("assign_simulations: offset must lie in [0, 1)");
  std::vector<int> counts(prior.size(), 0);
  if (prior.empty()) return counts;
  double cumulative = 0.0;
  double lower = 0.0;
  int assigned = 0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    cumulative += prior[i];
    const double upper = i + 1 == prior.size() ? static_cast<double>(n) : snap(n * cumulative, n);
    const int count = static_cast<int>(std::ceil(upper - x) - std::ceil(lower - x));
    counts[i] = std::max(count, 0);
    assigned += counts[i];
    lower = upper;
  }
  if (assigned != n) throw std::logic_error("assign_simulations: counts do not sum to n");
  return counts;
}

std::vector<int> assign_simulations(int n, std::span<const double> prior, Rng& rng) {
  return assign_simulations(n, prior, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

std::uint64_t root_key(std::uint64_t seed) { return mix64(seed); }

std::uint64_t child_key(std::uint64_t parent_key, Action action) {
  return mix64(parent_key, static_cast<std::uint64_t>(action));
}

NodePosterior combine_children(double v0, int sims, const Eigen::VectorXd& q, const Eigen::VectorXd& prior, double c) {
  const OptimizedPolicy<double> opt =
      solve_policy(PolicyOptProblem<double>{q, prior, static_cast<double>(sims - 1), c});
  const double n = static_cast<double>(sims);
  NodePosterior out;
  out.value = v0 / n + (n - 1.0) / n * q.dot(opt.pi_bar);
  out.pi_bar = opt.pi_bar;
  return out;
}

SearchResult search_rmcts_recursive(const GameState& root, const SearchParams& params, const Evaluator& evaluator) {
  check_rmcts_params(params);
  const auto start = std::chrono::steady_clock::now();
  SearchStats stats;
  Outcome o = recurse(root, params.n_sims, root_key(params.seed), params, evaluator, stats);
  stats.wall_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  SearchResult r;
  r.policy = std::move(o.policy);
  r.value = o.value;
  r.q = std::move(o.q);
  r.counts = std::move(o.counts);
  r.stats = stats;
  return r;
}

RmctsForest::RmctsForest(std::span<const GameState> roots, const SearchParams& params, const Evaluator& evaluator)
    : params_(params), root_count_(roots.size()) {
  check_rmcts_params(params);
  const auto start = std::chrono::steady_clock::now();
  // Every node consumes at least one simulation, so a tree never exceeds its budget.
  capacity_ = roots.size() * static_cast<std::size_t>(params.n_sims);
  nodes_.reserve(capacity_);
  root_priors_.resize(roots.size());
  root_stats_.resize(roots.size());
  for (std::size_t i = 0; i < roots.size(); ++i) {
    RmctsNode node;
    node.state = roots[i];
    node.key = root_key(params.seed);
    node.root = static_cast<int>(i);
    node.sims = params.n_sims;
    node.terminal = roots[i].is_terminal();
    push_node(std::move(node));
  }
  forward(evaluator);
  backward();
  stats_.wall_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
}

int RmctsForest::push_node(RmctsNode node) {
  if (nodes_.size() >= capacity_) throw std::logic_error("rmcts: node arena exhausted");
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size() - 1);
}

void RmctsForest::forward(const Evaluator& evaluator) {
  std::vector<int> pending;
  std::vector<GameState> batch;
  std::vector<int> last_call_level(root_count_, -1);
  int begin = 0;
  int end = static_cast<int>(nodes_.size());
  while (begin < end) {
    levels_.emplace_back(begin, end);
    const int level = static_cast<int>(levels_.size()) - 1;
    pending.clear();
    batch.clear();
    for (int i = begin; i < end; ++i) {
      if (nodes_[static_cast<std::size_t>(i)].terminal) continue;
      pending.push_back(i);
      batch.push_back(nodes_[static_cast<std::size_t>(i)].state);
    }
    std::vector<Evaluation> evals;
    if (!batch.empty()) {
      evals = evaluator.evaluate_batch(batch);
      ++stats_.eval_calls;
      stats_.eval_items += batch.size();
    }
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const int id = pending[j];
      Evaluation& eval = evals[j];
      RmctsNode& node = nodes_[static_cast<std::size_t>(id)];
      node.v0 = eval.value;
      SearchStats& rs = root_stats_[static_cast<std::size_t>(node.root)];
      ++rs.eval_items;
      if (last_call_level[static_cast<std::size_t>(node.root)] != level) {
        last_call_level[static_cast<std::size_t>(node.root)] = level;
        ++rs.eval_calls;
      }
      if (node.parent < 0) root_priors_[static_cast<std::size_t>(node.root)] = eval.policy;
      if (node.sims == 1) continue;

      const int actions = static_cast<int>(eval.policy.size());
      const std::vector<int> counts = assign_simulations(
          node.sims - 1, std::span<const double>(eval.policy.data(), eval.policy.size()), unit_interval(node.key));
      // nodes_ never reallocates (capacity reserved up front), but the parent's
      // fields are copied out before appending children.
      const GameState parent_state = node.state;
      const std::uint64_t parent_key = node.key;
      const int parent_depth = node.depth;
      const int parent_root = node.root;
      int first = -1;
      int count = 0;
      for (Action a = 0; a < actions; ++a) {
        const int share = counts[static_cast<std::size_t>(a)];
        if (share == 0) continue;
        RmctsNode child;
        child.state = apply(parent_state, a);
        child.key = child_key(parent_key, a);
        child.root = parent_root;
        child.parent = id;
        child.action = a;
        child.depth = parent_depth + 1;
        child.sims = share;
        child.terminal = child.state.is_terminal();
        child.prior_from_parent = eval.policy[a];
        const int child_id = push_node(std::move(child));
        if (first < 0) first = child_id;
        ++count;
      }
      RmctsNode& parent = nodes_[static_cast<std::size_t>(id)];
      parent.first_child = first;
      parent.child_count = count;
    }
    begin = end;
    end = static_cast<int>(nodes_.size());
  }
}

void RmctsForest::backward() {
  for (auto i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    RmctsNode& node = nodes_[static_cast<std::size_t>(i)];
    if (node.terminal) {
      node.value = terminal_score(node.state, node.state.to_move());
    } else if (node.sims == 1) {
      node.value = node.v0;
    } else {
      Eigen::VectorXd q(node.child_count);
      Eigen::VectorXd prior(node.child_count);
      for (int j = 0; j < node.child_count; ++j) {
        RmctsNode& child = nodes_[static_cast<std::size_t>(node.first_child + j)];
        child.q_from_parent = sgn_between(node.state, child.state) * child.value;
        q[j] = child.q_from_parent;
        prior[j] = child.prior_from_parent;
      }
      const NodePosterior post = combine_children(node.v0, node.sims, q, prior, params_.c);
      for (int j = 0; j < node.child_count; ++j) {
        nodes_[static_cast<std::size_t>(node.first_child + j)].pi_bar_from_parent = post.pi_bar[j];
      }
      node.value = post.value;
    }
  }
}

MultiSearchResult RmctsForest::results() const {
  MultiSearchResult out;
  out.stats = stats_;
  for (std::size_t r = 0; r < root_count_; ++r) {
    const RmctsNode& root = nodes_[r];
    const int actions = action_space_size(root.state.config());
    SearchResult res;
    res.value = root.value;
    res.q = Eigen::VectorXd::Zero(actions);
    res.counts.assign(static_cast<std::size_t>(actions), 0);
    if (!root.terminal) {
      if (root.sims == 1) {
        res.policy = root_priors_[r];
      } else {
        Eigen::VectorXd policy = Eigen::VectorXd::Zero(actions);
        for (int j = 0; j < root.child_count; ++j) {
          const RmctsNode& child = nodes_[static_cast<std::size_t>(root.first_child + j)];
          policy[child.action] = child.pi_bar_from_parent;
          res.q[child.action] = child.q_from_parent;
          res.counts[static_cast<std::size_t>(child.action)] = child.sims;
        }
        res.policy = std::move(policy);
      }
    }
    res.stats = root_stats_[r];
    res.stats.wall_time_us = stats_.wall_time_us;
    out.results.push_back(std::move(res));
  }
  return out;
}

MultiSearchResult search_rmcts_bfs(std::span<const GameState> roots, const SearchParams& params,
                                   const Evaluator& evaluator) {
  return RmctsForest(roots, params, evaluator).results();
}

}  // namespace rmcts
