#include "rmcts/arena.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "rmcts/mcts_ucb.hpp"
#include "rmcts/policy_opt.hpp"
#include "run_util.hpp"

namespace rmcts {

namespace {

using detail::Clock;
using detail::micros_since;
using detail::open_output;
using detail::parallel_for;

SearchParams params_for(const AgentSpec& agent, std::uint64_t seed) {
  SearchParams p;
  p.algorithm = agent.algorithm;
  p.n_sims = agent.n_sims;
  p.c = agent.c;
  p.seed = seed;
  return p;
}

GameState sample_opening(const GameConfig& game, int plies, std::uint64_t seed, const Evaluator& evaluator) {
  GameState s = GameState::initial(game);
  Rng rng(seed);
  for (int ply = 0; ply < plies && !s.is_terminal(); ++ply) {
    const Evaluation e = evaluator.evaluate(s);
    std::discrete_distribution<int> pick(e.policy.data(), e.policy.data() + e.policy.size());
    s = apply(s, pick(rng));
  }
  return s;
}

GameRecord play_game(const MatchConfig& config, int pair, bool a_first, const GameState& opening,
                     const Evaluator& eval_a, const Evaluator& eval_b) {
  GameRecord record;
  record.pair = pair;
  record.a_first = a_first;
  const Player a_seat = a_first ? Player::P1 : Player::P2;
  const std::uint64_t pair_seed = mix64(config.seed, static_cast<std::uint64_t>(pair));
  GameState s = opening;
  while (!s.is_terminal()) {
    const bool a_moves = s.to_move() == a_seat;
    const AgentSpec& agent = a_moves ? config.a : config.b;
    const Evaluator& evaluator = a_moves ? eval_a : eval_b;
    const SearchParams params = params_for(agent, mix64(pair_seed, static_cast<std::uint64_t>(s.move_count())));
    const auto start = Clock::now();
    const SearchResult r = search(s, params, evaluator);
    const double elapsed = micros_since(start);
    (a_moves ? record.time_a_us : record.time_b_us) += elapsed;
    (a_moves ? record.eval_calls_a : record.eval_calls_b) += r.stats.eval_calls;
    const Action action = best_action(r);
    record.moves.push_back(action);
    s = apply(s, action);
  }
  record.plies = static_cast<int>(record.moves.size());
  record.score_a = terminal_score(s, a_seat);
  return record;
}

std::shared_ptr<const Evaluator> build_evaluator(const std::string& id, const GameConfig& game,
                                                 const LatencyModel& latency) {
  return with_latency(make_evaluator(id, game), latency);
}

void fill_speedups(std::vector<BenchRow>& rows) {
  for (BenchRow& row : rows) {
    for (const BenchRow& base : rows) {
      if (base.algorithm == Algorithm::Ucb && base.n_sims == row.n_sims && row.time_per_root_us > 0.0) {
        row.speedup_vs_ucb = base.time_per_root_us / row.time_per_root_us;
      }
    }
  }
}

void check_bench(const BenchConfig& config) {
  if (config.roots < 1) throw std::invalid_argument("bench: roots must be positive");
  if (config.sims.empty() || config.algorithms.empty()) throw std::invalid_argument("bench: nothing to run");
  for (int n : config.sims) {
    if (n < 2) throw std::invalid_argument("bench: simulation counts must be at least 2");
  }
}

nlohmann::json agent_json(const AgentSpec& a) {
  return {{"algorithm", algorithm_name(a.algorithm)}, {"n_sims", a.n_sims}, {"c", a.c}, {"evaluator", a.evaluator}};
}

nlohmann::json latency_json(const LatencyModel& m) {
  return {{"fixed_overhead_us", m.fixed_overhead_us}, {"per_item_us", m.per_item_us}};
}

}  // namespace

std::string agent_label(const AgentSpec& agent) {
  return algorithm_name(agent.algorithm) + "(" + std::to_string(agent.n_sims) + ")";
}

void MatchConfig::validate() const {
  game.validate();
  if (is_one_player(game)) throw std::invalid_argument("match: the game must have two players");
  if (games_per_side < 1) throw std::invalid_argument("match: games_per_side must be positive");
  if (opening_plies < 0) throw std::invalid_argument("match: opening_plies must be non-negative");
  if (threads < 0) throw std::invalid_argument("match: threads must be non-negative");
  for (const AgentSpec* agent : {&a, &b}) {
    if (agent->n_sims < (agent->algorithm == Algorithm::Ucb ? 2 : 1))
      throw std::invalid_argument("match: simulation budget too small");
    if (!(agent->c > 0.0)) throw std::invalid_argument("match: c must be positive");
  }
}

MatchReport play_match(const MatchConfig& config) {
  config.validate();
  const auto eval_a = build_evaluator(config.a.evaluator, config.game, config.latency);
  const auto eval_b = build_evaluator(config.b.evaluator, config.game, config.latency);
  return play_match(config, *eval_a, *eval_b);
}

MatchReport play_match(const MatchConfig& config, const Evaluator& eval_a, const Evaluator& eval_b) {
  config.validate();
  const int pairs = config.games_per_side;
  std::vector<GameState> openings;
  openings.reserve(static_cast<std::size_t>(pairs));
  for (int pair = 0; pair < pairs; ++pair) {
    openings.push_back(sample_opening(config.game, config.opening_plies,
                                      mix64(mix64(config.seed, static_cast<std::uint64_t>(pair)), 0xA11CE),
                                      eval_a));
  }

  MatchReport report;
  report.config = config;
  report.games.resize(static_cast<std::size_t>(2 * pairs));
  const int total = 2 * pairs;
  parallel_for(total, config.threads == 0 ? total : config.threads, [&](int g) {
    const int pair = g / 2;
    report.games[static_cast<std::size_t>(g)] =
        play_game(config, pair, g % 2 == 0, openings[static_cast<std::size_t>(pair)], eval_a, eval_b);
  });
  summarize(report);
  return report;
}

void summarize(MatchReport& report) {
  report.wins = report.draws = report.losses = 0;
  double score = 0.0;
  double time_a = 0.0;
  double time_b = 0.0;
  for (const GameRecord& g : report.games) {
    score += g.score_a;
    time_a += g.time_a_us;
    time_b += g.time_b_us;
    if (g.score_a > 0) {
      ++report.wins;
    } else if (g.score_a < 0) {
      ++report.losses;
    } else {
      ++report.draws;
    }
  }
  const double n = std::max<double>(1.0, static_cast<double>(report.games.size()));
  report.mean_score = score / n;
  report.mean_time_a_us = time_a / n;
  report.mean_time_b_us = time_b / n;
  report.speedup_a_over_b = report.mean_time_a_us > 0.0 ? report.mean_time_b_us / report.mean_time_a_us : 0.0;
}

nlohmann::json match_to_json(const MatchReport& report) {
  nlohmann::json games = nlohmann::json::array();
  for (const GameRecord& g : report.games) {
    std::vector<std::string> moves;
    for (Action a : g.moves) moves.push_back(format_move(report.config.game, a));
    games.push_back({{"pair", g.pair},
                     {"a_first", g.a_first},
                     {"score_a", g.score_a},
                     {"plies", g.plies},
                     {"time_a_us", g.time_a_us},
                     {"time_b_us", g.time_b_us},
                     {"eval_calls_a", g.eval_calls_a},
                     {"eval_calls_b", g.eval_calls_b},
                     {"moves", moves}});
  }
  const MatchConfig& c = report.config;
  return {{"config",
           {{"game", game_config_to_json(c.game)},
            {"agent_a", agent_json(c.a)},
            {"agent_b", agent_json(c.b)},
            {"games_per_side", c.games_per_side},
            {"seed", c.seed},
            {"latency", latency_json(c.latency)},
            {"opening_plies", c.opening_plies}}},
          {"summary",
           {{"games", report.games.size()},
            {"mean_score", report.mean_score},
            {"wins", report.wins},
            {"draws", report.draws},
            {"losses", report.losses},
            {"mean_time_a_us", report.mean_time_a_us},
            {"mean_time_b_us", report.mean_time_b_us},
            {"speedup_a_over_b", report.speedup_a_over_b}}},
          {"games", games}};
}

void write_match_csv(const MatchReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "pair,a_first,score_a,plies,time_a_us,time_b_us,eval_calls_a,eval_calls_b,moves\n";
  for (const GameRecord& g : report.games) {
    out << g.pair << ',' << (g.a_first ? 1 : 0) << ',' << g.score_a << ',' << g.plies << ',' << g.time_a_us << ','
        << g.time_b_us << ',' << g.eval_calls_a << ',' << g.eval_calls_b << ',';
    for (std::size_t i = 0; i < g.moves.size(); ++i) {
      out << (i ? " " : "") << g.moves[i];
    }
    out << '\n';
  }
}

std::vector<GameState> bench_positions(const GameConfig& game, int count, std::uint64_t seed) {
  Rng rng(mix64(seed, 0xBE7C));
  std::vector<GameState> out;
  while (static_cast<int>(out.size()) < count) {
    GameState s = GameState::initial(game);
    const int plies = 4 + static_cast<int>(rng() % 7);
    for (int i = 0; i < plies && !s.is_terminal(); ++i) {
      const auto legal = legal_actions(s);
      s = apply(s, legal[rng() % legal.size()]);
    }
    if (!s.is_terminal()) out.push_back(s);
  }
  return out;
}

BenchReport bench_single_root(const BenchConfig& config) {
  return bench_single_root(config, *build_evaluator(config.evaluator, config.game, config.latency));
}

BenchReport bench_single_root(const BenchConfig& config, const Evaluator& evaluator) {
  check_bench(config);
  const auto positions = bench_positions(config.game, config.roots, config.seed);
  BenchReport report;
  report.config = config;
  for (Algorithm algorithm : config.algorithms) {
    for (int n : config.sims) {
      BenchRow row;
      row.algorithm = algorithm;
      row.n_sims = n;
      row.roots = config.roots;
      const auto start = Clock::now();
      for (const GameState& s : positions) {
        const SearchResult r = search(s, SearchParams{n, config.c, config.seed, algorithm}, evaluator);
        row.eval_calls += static_cast<double>(r.stats.eval_calls);
        row.eval_items += static_cast<double>(r.stats.eval_items);
      }
      row.wall_time_us = micros_since(start);
      row.time_per_root_us = row.wall_time_us / config.roots;
      row.eval_calls /= config.roots;
      row.eval_items /= config.roots;
      report.rows.push_back(row);
    }
  }
  fill_speedups(report.rows);
  return report;
}

BenchReport bench_multi_root(const BenchConfig& config) {
  return bench_multi_root(config, *build_evaluator(config.evaluator, config.game, config.latency));
}

BenchReport bench_multi_root(const BenchConfig& config, const Evaluator& evaluator) {
  check_bench(config);
  const auto positions = bench_positions(config.game, config.roots, config.seed);
  BenchReport report;
  report.config = config;
  for (Algorithm algorithm : config.algorithms) {
    for (int n : config.sims) {
      BenchRow row;
      row.algorithm = algorithm;
      row.n_sims = n;
      row.roots = config.roots;
      row.joint = true;
      const auto start = Clock::now();
      const MultiSearchResult r = search_multi(positions, SearchParams{n, config.c, config.seed, algorithm}, evaluator);
      row.wall_time_us = micros_since(start);
      row.time_per_root_us = row.wall_time_us / config.roots;
      row.eval_calls = static_cast<double>(r.stats.eval_calls);
      row.eval_items = static_cast<double>(r.stats.eval_items) / config.roots;
      report.rows.push_back(row);
    }
  }
  fill_speedups(report.rows);
  return report;
}

nlohmann::json bench_to_json(const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const BenchRow& r : report.rows) {
    rows.push_back({{"algorithm", algorithm_name(r.algorithm)},
                    {"n_sims", r.n_sims},
                    {"roots", r.roots},
                    {"joint", r.joint},
                    {"wall_time_us", r.wall_time_us},
                    {"time_per_root_us", r.time_per_root_us},
                    {"eval_calls", r.eval_calls},
                    {"eval_items", r.eval_items},
                    {"speedup_vs_ucb", r.speedup_vs_ucb}});
  }
  const BenchConfig& c = report.config;
  return {{"config",
           {{"game", game_config_to_json(c.game)},
            {"c", c.c},
            {"roots", c.roots},
            {"latency", latency_json(c.latency)},
            {"evaluator", c.evaluator},
            {"seed", c.seed}}},
          {"rows", rows}};
}

void write_bench_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "algorithm,n_sims,roots,joint,wall_time_us,time_per_root_us,eval_calls,eval_items,speedup_vs_ucb\n";
  for (const BenchRow& r : report.rows) {
    out << algorithm_name(r.algorithm) << ',' << r.n_sims << ',' << r.roots << ',' << (r.joint ? 1 : 0) << ','
        << r.wall_time_us << ',' << r.time_per_root_us << ',' << r.eval_calls << ',' << r.eval_items << ','
        << r.speedup_vs_ucb << '\n';
  }
}

std::vector<BanditStep> bandit_trace(const BanditConfig& config) {
  if (config.p.size() < 2 || config.p.size() > static_cast<std::size_t>(kMaxArms))
    throw std::invalid_argument("bandit: between 2 and 8 arms");
  const GameConfig game = GameConfig::bandit(config.p);
  const SearchParams params{config.n_sims, config.c, config.seed, Algorithm::Ucb};
  UcbTree tree(GameState::initial(game), params);
  std::vector<BanditStep> trace;
  tree.set_observer([&](int node_id, int index, double value) {
    if (node_id != 0) return;
    const UcbNode& root = tree.nodes().front();
    BanditStep step;
    step.step = static_cast<int>(root.total_n);
    step.arm = root.actions[static_cast<std::size_t>(index)];
    step.reward = value;
    step.q = root.q;
    step.counts = root.n;
    for (std::size_t i = 0; i < root.actions.size(); ++i) {
      step.ucb.push_back(ucb(root.q[i], root.prior[i], root.total_n, static_cast<long long>(root.n[i]), config.c));
    }
    trace.push_back(std::move(step));
  });
  const UniformEvaluator evaluator;
  while (tree.advance()) tree.resume(evaluator.evaluate(tree.pending_state()));
  return trace;
}

void write_bandit_csv(const std::vector<BanditStep>& trace, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "step,arm,reward";
  const std::size_t arms = trace.empty() ? 0 : trace.front().q.size();
  for (std::size_t i = 1; i <= arms; ++i) out << ",q_" << i << ",n_" << i << ",ucb_" << i;
  out << '\n';
  for (const BanditStep& s : trace) {
    out << s.step << ',' << s.arm + 1 << ',' << s.reward;
    for (std::size_t i = 0; i < arms; ++i) out << ',' << s.q[i] << ',' << s.counts[i] << ',' << s.ucb[i];
    out << '\n';
  }
}

}  // namespace rmcts
