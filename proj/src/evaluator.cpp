#include "rmcts/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace rmcts {

namespace {

void sleep_us(double micros) {
  if (micros <= 0.0) return;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double, std::micro>(micros));
  std::this_thread::sleep_until(deadline);
}

// --- Connect-4 -------------------------------------------------------------

Evaluation connect4_heuristic(const GameState& s) {
  const GameConfig& cfg = s.config();
  const auto cells = s.cells();
  const std::int8_t me = s.to_move() == Player::P1 ? 1 : 2;
  const int k = cfg.connect_k;
  double own = 0.0;
  double opp = 0.0;
  constexpr std::array<std::array<int, 2>, 4> kLines{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
  for (int row = 0; row < cfg.height; ++row) {
    for (int col = 0; col < cfg.width; ++col) {
      for (const auto& [dr, dc] : kLines) {
        const int end_r = row + (k - 1) * dr;
        const int end_c = col + (k - 1) * dc;
        if (end_r < 0 || end_r >= cfg.height || end_c < 0 || end_c >= cfg.width) continue;
        int mine = 0;
        int theirs = 0;
        for (int i = 0; i < k; ++i) {
          const std::int8_t c = cells[(row + i * dr) * cfg.width + (col + i * dc)];
          if (c == me) ++mine;
          else if (c != 0) ++theirs;
        }
        // Windows holding one player's discs only; k-1 discs is a threat.
        if (theirs == 0 && mine > 0) own += mine == k - 1 ? 4.0 : mine;
        if (mine == 0 && theirs > 0) opp += theirs == k - 1 ? 4.0 : theirs;
      }
    }
  }
  Evaluation e;
  e.value = max_score(cfg) * std::tanh(0.15 * (own - opp));
  e.policy.resize(cfg.width);
  const double center = 0.5 * (cfg.width - 1);
  for (int col = 0; col < cfg.width; ++col) e.policy[col] = std::exp(-0.25 * std::abs(col - center));
  return e;
}

// --- Othello ---------------------------------------------------------------

// Number of placements available to `who`, ignoring whose turn it is.
int othello_mobility(const GameConfig& cfg, std::span<const std::int8_t> cells, std::int8_t who) {
  const int n = cfg.width;
  int count = 0;
  for (int cell = 0; cell < n * n; ++cell) {
    if (cells[cell] != 0) continue;
    const int row = cell / n;
    const int col = cell % n;
    bool legal = false;
    for (int dr = -1; dr <= 1 && !legal; ++dr) {
      for (int dc = -1; dc <= 1 && !legal; ++dc) {
        if (dr == 0 && dc == 0) continue;
        int r = row + dr;
        int c = col + dc;
        int run = 0;
        while (r >= 0 && r < n && c >= 0 && c < n && cells[r * n + c] != 0 && cells[r * n + c] != who) {
          r += dr;
          c += dc;
          ++run;
        }
        legal = run > 0 && r >= 0 && r < n && c >= 0 && c < n && cells[r * n + c] == who;
      }
    }
    count += legal ? 1 : 0;
  }
  return count;
}

double othello_square_weight(int row, int col, int n) {
  const auto edge_dist = [n](int i) { return std::min(i, n - 1 - i); };
  const int dr = edge_dist(row);
  const int dc = edge_dist(col);
  if (dr == 0 && dc == 0) return 2.0;   // corner
  if (dr == 1 && dc == 1) return -1.5;  // diagonal neighbour of a corner
  if ((dr == 0 && dc == 1) || (dr == 1 && dc == 0)) return -0.5;
  if (dr == 0 || dc == 0) return 0.5;
  return 0.0;
}

Evaluation othello_heuristic(const GameState& s) {
  const GameConfig& cfg = s.config();
  const int n = cfg.width;
  const auto cells = s.cells();
  const std::int8_t me = s.to_move() == Player::P1 ? 1 : 2;

  double positional = 0.0;
  int disc_diff = 0;
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const std::int8_t c = cells[row * n + col];
      if (c == 0) continue;
      const double sign = c == me ? 1.0 : -1.0;
      positional += sign * othello_square_weight(row, col, n);
      disc_diff += c == me ? 1 : -1;
    }
  }
  const int my_moves = othello_mobility(cfg, cells, me);
  const int their_moves = othello_mobility(cfg, cells, me == 1 ? 2 : 1);
  const double raw = 1.5 * positional + 0.5 * (my_moves - their_moves) + 0.1 * disc_diff;

  Evaluation e;
  e.value = 0.5 * max_score(cfg) * std::tanh(raw / 8.0);
  e.policy.resize(action_space_size(cfg));
  for (int cell = 0; cell < n * n; ++cell) e.policy[cell] = std::exp(othello_square_weight(cell / n, cell % n, n));
  e.policy[othello_pass(cfg)] = 1.0;
  return e;
}

// --- Dots-and-Boxes --------------------------------------------------------

Evaluation dots_heuristic(const GameState& s) {
  const GameConfig& cfg = s.config();
  const int rows = cfg.height;
  const int cols = cfg.width;
  const int h_edges = (rows + 1) * cols;
  const int edges = h_edges + rows * (cols + 1);
  const auto cells = s.cells();
  const std::int8_t me = s.to_move() == Player::P1 ? 1 : 2;

  const auto box_edges = [&](int r, int c) {
    return std::array<int, 4>{r * cols + c, (r + 1) * cols + c, h_edges + r * (cols + 1) + c,
                              h_edges + r * (cols + 1) + c + 1};
  };
  const auto drawn = [&](int r, int c) {
    int n = 0;
    for (int e : box_edges(r, c)) n += cells[e] != 0 ? 1 : 0;
    return n;
  };

  double balance = 0.0;
  int capturable = 0;
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(edges);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::int8_t owner = cells[edges + r * cols + c];
      if (owner != 0) {
        balance += owner == me ? 1.0 : -1.0;
        continue;
      }
      const int d = drawn(r, c);
      for (int e : box_edges(r, c)) {
        if (cells[e] != 0) continue;
        if (d == 3) logits[e] += 3.0;        // completes a box
        else if (d == 2) logits[e] -= 2.0;   // hands the opponent a box
      }
      if (d == 3) ++capturable;
    }
  }
  Evaluation e;
  const double m = max_score(cfg);
  e.value = std::clamp(balance + 0.8 * capturable, -m, m);
  e.policy = logits.array().exp().matrix();
  return e;
}

}  // namespace

Eigen::VectorXd mask_and_renormalize(const Eigen::Ref<const Eigen::VectorXd>& raw, std::span<const Action> legal) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(raw.size());
  double mass = 0.0;
  for (Action a : legal) {
    const double p = raw[a];
    if (p > 0.0 && std::isfinite(p)) {
      out[a] = p;
      mass += p;
    }
  }
  if (mass > 0.0 && std::isfinite(mass)) {
    for (Action a : legal) out[a] /= mass;
  } else {
    out.setZero();
    for (Action a : legal) out[a] = 1.0 / static_cast<double>(legal.size());
  }
  return out;
}

std::vector<Evaluation> Evaluator::evaluate_batch(std::span<const GameState> states) const {
  for (const GameState& s : states) {
    if (s.is_terminal()) throw std::invalid_argument("evaluate_batch: terminal state in batch");
  }
  std::vector<Evaluation> out(states.size());
  evaluate_raw(states, out);
  for (std::size_t i = 0; i < states.size() && !output_is_masked(); ++i) {
    const auto legal = legal_actions(states[i]);
    out[i].policy = mask_and_renormalize(out[i].policy, legal);
  }
  calls_.fetch_add(1);
  items_.fetch_add(states.size());
  return out;
}

Evaluation Evaluator::evaluate(const GameState& state) const {
  return std::move(evaluate_batch(std::span<const GameState>(&state, 1)).front());
}

void UniformEvaluator::evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i].value = 0.0;
    out[i].policy = Eigen::VectorXd::Ones(action_space_size(states[i].config()));
  }
}

void HeuristicEvaluator::evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    const GameState& s = states[i];
    switch (s.config().game) {
      case GameKind::Connect4: out[i] = connect4_heuristic(s); break;
      case GameKind::Othello: out[i] = othello_heuristic(s); break;
      case GameKind::DotsAndBoxes: out[i] = dots_heuristic(s); break;
      case GameKind::BinaryTree:
      case GameKind::Bandit:
        out[i].value = 0.0;
        out[i].policy = Eigen::VectorXd::Ones(action_space_size(s.config()));
        break;
    }
  }
}

TinyNetEvaluator::TinyNetEvaluator(std::shared_ptr<const ModelCheckpoint> net) : net_(std::move(net)) {
  if (!net_) throw std::invalid_argument("TinyNetEvaluator: null checkpoint");
  net_->validate();
}

void TinyNetEvaluator::evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const {
  // Per-item products keep results independent of batch composition.
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!(states[i].config() == net_->config))
      throw std::invalid_argument("TinyNetEvaluator: state from a different game configuration");
    NetOutput o = tiny_net_forward(*net_, encode(states[i]));
    out[i].value = o.value;
    out[i].policy = std::move(o.policy);
  }
}

LatencyEvaluator::LatencyEvaluator(std::shared_ptr<const Evaluator> inner, LatencyModel model)
    : inner_(std::move(inner)), model_(model) {
  if (!inner_) throw std::invalid_argument("LatencyEvaluator: null inner evaluator");
  if (model_.fixed_overhead_us < 0.0 || model_.per_item_us < 0.0)
    throw std::invalid_argument("LatencyEvaluator: latencies must be non-negative");
}

void LatencyEvaluator::evaluate_raw(std::span<const GameState> states, std::span<Evaluation> out) const {
  sleep_us(model_.fixed_overhead_us + model_.per_item_us * static_cast<double>(states.size()));
  std::vector<Evaluation> inner = inner_->evaluate_batch(states);
  std::move(inner.begin(), inner.end(), out.begin());
}

std::shared_ptr<const Evaluator> with_latency(std::shared_ptr<const Evaluator> inner, LatencyModel model) {
  if (model.fixed_overhead_us == 0.0 && model.per_item_us == 0.0) return inner;
  return std::make_shared<LatencyEvaluator>(std::move(inner), model);
}

std::shared_ptr<const Evaluator> make_evaluator(const std::string& id, const GameConfig& config) {
  if (id == "uniform") return std::make_shared<UniformEvaluator>();
  if (id == "heuristic") return std::make_shared<HeuristicEvaluator>();
  constexpr std::string_view kTinyNet = "tinynet:";
  if (id == "tinynet:random") {
    return std::make_shared<TinyNetEvaluator>(
        std::make_shared<const ModelCheckpoint>(ModelCheckpoint::random(config, kDefaultHidden, 0)));
  }
  if (id.rfind(kTinyNet, 0) == 0) {
    auto net = std::make_shared<ModelCheckpoint>(load_checkpoint(id.substr(kTinyNet.size())));
    if (!(net->config == config))
      throw std::invalid_argument("checkpoint was trained for a different game configuration");
    return std::make_shared<TinyNetEvaluator>(std::move(net));
  }
  throw std::invalid_argument("unknown evaluator '" + id + "'");
}

}  // namespace rmcts
