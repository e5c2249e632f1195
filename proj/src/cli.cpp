#include "rmcts/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "rmcts/arena.hpp"
#include "rmcts/play_service.hpp"
#include "rmcts/policy_opt.hpp"
#include "rmcts/selfplay.hpp"
#include "run_util.hpp"

namespace rmcts {

namespace {

using nlohmann::json;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string format = "csv";
  int threads = 0;
  std::string config;
};

struct BenchOpts {
  std::string game = "connect4";
  std::vector<std::string> algo{"ucb", "rmcts"};
  std::vector<int> sims{32, 64, 128, 256, 512, 1024};
  double c = 1.0;
  int roots = 1;
  double latency_us = 0.0;
  std::string evaluator = "tinynet:random";
  bool multi = false;
  std::string out;
};

struct ArenaOpts {
  std::string game = "othello:6";
  std::vector<std::string> algo{"rmcts", "ucb"};
  std::vector<int> sims{512, 256};
  double c = 1.0;
  int games = 32;
  double latency_us = 0.0;
  std::vector<std::string> evaluator{"heuristic"};
  int opening_plies = 2;
  std::string out;
};

struct BanditOpts {
  std::vector<double> p{0.6, 0.4};
  int sims = 200;
  double c = 1.0;
  std::string out;
};

struct SelfplayOpts {
  std::string game = "connect4:4x4:3";
  std::string algo = "rmcts";
  int sims = 64;
  double c = 1.0;
  int games = 64;
  int parallel = 64;
  int temperature_plies = 6;
  double latency_us = 0.0;
  std::string evaluator = "tinynet:random";
  double budget_s = 0.0;
  std::string out;
};

struct TrainOpts {
  std::string game = "connect4:4x4:3";
  std::string algo = "rmcts";
  int sims = 64;
  double c = 1.0;
  int iterations = 20;
  int games = 64;
  int parallel = 64;
  int temperature_plies = 6;
  int hidden = kDefaultHidden;
  int batch = 64;
  int steps = 32;
  double lr = 0.05;
  std::size_t buffer = 20000;
  double latency_us = 0.0;
  int arena_every = 0;
  int arena_games = 4;
  int checkpoint_every = 0;
  std::string init;
};

struct ServeOpts {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string algo = "rmcts";
  int sims = 256;
  double c = 1.0;
  std::string evaluator = "heuristic";
  double latency_us = 0.0;
};

struct SolveOpts {
  std::vector<double> q;
  std::vector<double> prior;
  double sims = 1.0;
  double c = 1.0;
  std::string out;
};

struct State {
  Globals g;
  BenchOpts bench;
  ArenaOpts arena;
  BanditOpts bandit;
  SelfplayOpts selfplay;
  TrainOpts train;
  ServeOpts serve;
  SolveOpts solve;
};

/// The parser for one pass over the arguments, bound to `s`.
struct Parser {
  CLI::App app{"Recursive MCTS and MCTS-UCB experiments", "rmcts"};
  CLI::App* bench = nullptr;
  CLI::App* arena = nullptr;
  CLI::App* bandit = nullptr;
  CLI::App* selfplay = nullptr;
  CLI::App* train = nullptr;
  CLI::App* serve = nullptr;
  CLI::App* solve = nullptr;

  explicit Parser(State& s) {
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    app.add_option("--seed", s.g.seed, "Base random seed");
    app.add_option("--out-dir", s.g.out_dir, "Directory for output files");
    app.add_option("--format", s.g.format, "Output file format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--threads", s.g.threads, "Worker threads for parallel games (0: one per game)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--config", s.g.config, "JSON file of option values; command-line flags take precedence");

    bench = app.add_subcommand("bench", "Time UCB and RMCTS searches across simulation budgets");
    bench->add_option("--game", s.bench.game, "Game spec, e.g. connect4, othello:6, dots:2x2");
    bench->add_option("--algo", s.bench.algo, "Algorithms to run")->delimiter(',');
    bench->add_option("--sims", s.bench.sims, "Simulation budgets")->delimiter(',');
    bench->add_option("--c", s.bench.c, "Exploration constant");
    bench->add_option("--roots", s.bench.roots, "Positions searched")->check(CLI::PositiveNumber);
    bench->add_option("--latency-us", s.bench.latency_us, "Sleep per evaluator call")->check(CLI::NonNegativeNumber);
    bench->add_option("--evaluator", s.bench.evaluator, "uniform, heuristic, tinynet:<path> or tinynet:random");
    bench->add_flag("--multi", s.bench.multi, "Search all roots jointly");
    bench->add_option("--out", s.bench.out, "Output file (default <out-dir>/bench.<format>)");

    arena = app.add_subcommand("arena", "Paired games between two agents");
    arena->add_option("--game", s.arena.game, "Game spec");
    arena->add_option("--algo", s.arena.algo, "Algorithms of agents A and B")->delimiter(',');
    arena->add_option("--sims", s.arena.sims, "Budgets of A and B (one value for both)")->delimiter(',');
    arena->add_option("--c", s.arena.c, "Exploration constant");
    arena->add_option("--games", s.arena.games, "Games per side")->check(CLI::PositiveNumber);
    arena->add_option("--latency-us", s.arena.latency_us, "Sleep per evaluator call")->check(CLI::NonNegativeNumber);
    arena->add_option("--evaluator", s.arena.evaluator, "Evaluators of A and B (one value for both)")->delimiter(',');
    arena->add_option("--opening-plies", s.arena.opening_plies, "Random opening plies")->check(CLI::NonNegativeNumber);
    arena->add_option("--out", s.arena.out, "Output file (default <out-dir>/arena.<format>)");

    bandit = app.add_subcommand("bandit", "Trace MCTS-UCB on a Bernoulli bandit");
    bandit->add_option("--p", s.bandit.p, "Arm payout probabilities")->delimiter(',');
    bandit->add_option("--sims", s.bandit.sims, "Simulations")->check(CLI::Range(2, 1 << 24));
    bandit->add_option("--c", s.bandit.c, "Exploration constant");
    bandit->add_option("--out", s.bandit.out, "Output file (default <out-dir>/bandit.<format>)");

    selfplay = app.add_subcommand("selfplay", "Generate self-play games and a replay buffer");
    selfplay->add_option("--game", s.selfplay.game, "Game spec");
    selfplay->add_option("--algo", s.selfplay.algo, "rmcts or ucb");
    selfplay->add_option("--sims", s.selfplay.sims, "Simulations per move");
    selfplay->add_option("--c", s.selfplay.c, "Exploration constant");
    selfplay->add_option("--games", s.selfplay.games, "Games to play")->check(CLI::NonNegativeNumber);
    selfplay->add_option("--parallel", s.selfplay.parallel, "Games searched jointly")->check(CLI::PositiveNumber);
    selfplay->add_option("--temperature-plies", s.selfplay.temperature_plies, "Plies sampled from the posterior");
    selfplay->add_option("--latency-us", s.selfplay.latency_us, "Sleep per evaluator call")
        ->check(CLI::NonNegativeNumber);
    selfplay->add_option("--evaluator", s.selfplay.evaluator, "Evaluator id");
    selfplay->add_option("--budget-s", s.selfplay.budget_s, "Wall-clock budget; overrides --games when positive")
        ->check(CLI::NonNegativeNumber);
    selfplay->add_option("--out", s.selfplay.out, "Replay buffer file (default <out-dir>/replay.bin)");

    train = app.add_subcommand("train", "Self-play training of the tiny network");
    train->add_option("--game", s.train.game, "Game spec");
    train->add_option("--algo", s.train.algo, "rmcts or ucb");
    train->add_option("--sims", s.train.sims, "Simulations per move");
    train->add_option("--c", s.train.c, "Exploration constant");
    train->add_option("--iterations", s.train.iterations, "Training iterations")->check(CLI::NonNegativeNumber);
    train->add_option("--games", s.train.games, "Self-play games per iteration")->check(CLI::NonNegativeNumber);
    train->add_option("--parallel", s.train.parallel, "Games searched jointly")->check(CLI::PositiveNumber);
    train->add_option("--temperature-plies", s.train.temperature_plies, "Plies sampled from the posterior");
    train->add_option("--hidden", s.train.hidden, "Hidden units of a fresh network")->check(CLI::PositiveNumber);
    train->add_option("--batch", s.train.batch, "SGD batch size")->check(CLI::PositiveNumber);
    train->add_option("--steps", s.train.steps, "SGD steps per iteration")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", s.train.lr, "Learning rate")->check(CLI::NonNegativeNumber);
    train->add_option("--buffer", s.train.buffer, "Replay capacity")->check(CLI::PositiveNumber);
    train->add_option("--latency-us", s.train.latency_us, "Sleep per evaluator call")->check(CLI::NonNegativeNumber);
    train->add_option("--arena-every", s.train.arena_every, "Play iteration 0 every k iterations (0: never)")
        ->check(CLI::NonNegativeNumber);
    train->add_option("--arena-games", s.train.arena_games, "Arena games per side")->check(CLI::PositiveNumber);
    train->add_option("--checkpoint-every", s.train.checkpoint_every, "Save a numbered checkpoint every k iterations")
        ->check(CLI::NonNegativeNumber);
    train->add_option("--init", s.train.init, "Starting checkpoint (default: random weights)");

    serve = app.add_subcommand("serve", "Run the HTTP play service");
    serve->add_option("--host", s.serve.host, "Bind address");
    serve->add_option("--port", s.serve.port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--algo", s.serve.algo, "Default agent algorithm");
    serve->add_option("--sims", s.serve.sims, "Default agent simulations");
    serve->add_option("--c", s.serve.c, "Default exploration constant");
    serve->add_option("--evaluator", s.serve.evaluator, "Default evaluator id");
    serve->add_option("--latency-us", s.serve.latency_us, "Sleep per evaluator call")->check(CLI::NonNegativeNumber);

    solve = app.add_subcommand("solve-policy", "Solve for the regularized posterior of one node");
    solve->add_option("--q", s.solve.q, "Action values (required)")->delimiter(',');
    solve->add_option("--prior", s.solve.prior, "Prior probabilities (required)")->delimiter(',');
    solve->add_option("--sims", s.solve.sims, "Simulation budget N");
    solve->add_option("--c", s.solve.c, "Exploration constant");
    solve->add_option("--out", s.solve.out, "Also write the result to this file");
  }

  CLI::App* selected() const {
    const auto chosen = app.get_subcommands();
    return chosen.empty() ? nullptr : chosen.front();
  }
};

std::string config_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const json& item : v) {
      if (!joined.empty()) joined += ',';
      joined += config_value(item);
    }
    return joined;
  }
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw UsageError("config values must be strings, numbers, booleans or arrays");
}

/// Appends "--key value" for every config entry whose flag was not given.
std::vector<std::string> merge_config(const Parser& parsed, const std::string& path, std::vector<std::string> args) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  const json cfg = json::parse(in, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object()) throw UsageError("config file must hold a JSON object");
  const CLI::App* sub = parsed.selected();
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (key == "config") throw UsageError("config files cannot name another config file");
    const CLI::Option* opt = sub ? sub->get_option_no_throw(flag) : nullptr;
    if (opt == nullptr) opt = parsed.app.get_option_no_throw(flag);
    if (opt == nullptr) throw UsageError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    if (opt->get_expected_min() == 0) {
      if (!value.is_boolean()) throw UsageError("config key '" + key + "' must be true or false");
      if (value.get<bool>()) args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    args.push_back(config_value(value));
  }
  return args;
}

std::filesystem::path output_path(const std::string& explicit_path, const Globals& g, const std::string& stem,
                                  const std::string& extension) {
  if (!explicit_path.empty()) return explicit_path;
  return std::filesystem::path(g.out_dir) / (stem + "." + extension);
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

LatencyModel latency(double us) { return {us, 0.0}; }

json globals_json(const Globals& g) {
  return {{"seed", g.seed}, {"out_dir", g.out_dir}, {"format", g.format}, {"threads", g.threads}};
}

int run_bench(const State& s, std::ostream& out) {
  BenchConfig cfg;
  cfg.game = parse_game_spec(s.bench.game);
  cfg.algorithms.clear();
  for (const std::string& a : s.bench.algo) cfg.algorithms.push_back(parse_algorithm(a));
  cfg.sims = s.bench.sims;
  cfg.c = s.bench.c;
  cfg.roots = s.bench.roots;
  cfg.latency = latency(s.bench.latency_us);
  cfg.evaluator = s.bench.evaluator;
  cfg.seed = s.g.seed;
  const BenchReport report = s.bench.multi ? bench_multi_root(cfg) : bench_single_root(cfg);
  const auto path = output_path(s.bench.out, s.g, "bench", s.g.format);
  if (s.g.format == "json") {
    write_json(path, bench_to_json(report));
  } else {
    write_bench_csv(report, path);
  }
  out << "algorithm  n_sims  eval_calls  time_per_root_us  speedup_vs_ucb\n";
  for (const BenchRow& row : report.rows) {
    out << std::left << std::setw(11) << algorithm_name(row.algorithm) << std::setw(8) << row.n_sims
        << std::setw(12) << row.eval_calls << std::setw(18) << row.time_per_root_us << row.speedup_vs_ucb << '\n';
  }
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int run_arena(const State& s, std::ostream& out) {
  const ArenaOpts& o = s.arena;
  if (o.algo.size() != 2) throw UsageError("--algo needs two algorithms, for agents A and B");
  if (o.sims.empty() || o.sims.size() > 2) throw UsageError("--sims takes one or two values");
  if (o.evaluator.empty() || o.evaluator.size() > 2) throw UsageError("--evaluator takes one or two values");
  MatchConfig cfg;
  cfg.game = parse_game_spec(o.game);
  cfg.a = {parse_algorithm(o.algo[0]), o.sims.front(), o.c, o.evaluator.front()};
  cfg.b = {parse_algorithm(o.algo[1]), o.sims.back(), o.c, o.evaluator.back()};
  cfg.games_per_side = o.games;
  cfg.seed = s.g.seed;
  cfg.latency = latency(o.latency_us);
  cfg.opening_plies = o.opening_plies;
  cfg.threads = s.g.threads;
  const MatchReport report = play_match(cfg);
  const auto path = output_path(o.out, s.g, "arena", s.g.format);
  if (s.g.format == "json") {
    write_json(path, match_to_json(report));
  } else {
    write_match_csv(report, path);
  }
  out << agent_label(cfg.a) << " vs " << agent_label(cfg.b) << ": mean score " << report.mean_score << " (W/D/L "
      << report.wins << '/' << report.draws << '/' << report.losses << "), mean time per game "
      << report.mean_time_a_us << " us vs " << report.mean_time_b_us << " us\n";
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int run_bandit(const State& s, std::ostream& out) {
  BanditConfig cfg;
  cfg.p = s.bandit.p;
  cfg.n_sims = s.bandit.sims;
  cfg.c = s.bandit.c;
  cfg.seed = s.g.seed;
  const auto trace = bandit_trace(cfg);
  const auto path = output_path(s.bandit.out, s.g, "bandit", s.g.format);
  if (s.g.format == "json") {
    json steps = json::array();
    for (const BanditStep& st : trace) {
      steps.push_back({{"step", st.step},
                       {"arm", st.arm + 1},
                       {"reward", st.reward},
                       {"q", st.q},
                       {"counts", st.counts},
                       {"ucb", st.ucb}});
    }
    write_json(path, {{"p", cfg.p}, {"n_sims", cfg.n_sims}, {"c", cfg.c}, {"seed", cfg.seed}, {"trace", steps}});
  } else {
    write_bandit_csv(trace, path);
  }
  if (!trace.empty()) {
    out << "pulls per arm:";
    for (int n : trace.back().counts) out << ' ' << n;
    out << '\n';
  }
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int run_selfplay(const State& s, std::ostream& out) {
  const SelfplayOpts& o = s.selfplay;
  RolloutConfig cfg;
  cfg.game = parse_game_spec(o.game);
  cfg.algorithm = parse_algorithm(o.algo);
  cfg.n_sims = o.sims;
  cfg.c = o.c;
  cfg.games = o.games;
  cfg.parallel = o.parallel;
  cfg.temperature_plies = o.temperature_plies;
  cfg.seed = s.g.seed;
  const auto evaluator = with_latency(make_evaluator(o.evaluator, cfg.game), latency(o.latency_us));
  std::optional<double> budget;
  if (o.budget_s > 0.0) budget = o.budget_s * 1e6;
  const RolloutResult result = generate_rollouts(cfg, *evaluator, budget);

  ReplayBuffer buffer(std::max<std::size_t>(1, result.examples.size()));
  buffer.add(result.examples);
  const auto replay_path = output_path(o.out, s.g, "replay", "bin");
  buffer.save(replay_path);
  const auto jsonl_path = std::filesystem::path(s.g.out_dir) / "examples.jsonl";
  buffer.export_jsonl(jsonl_path);

  const auto games_path = output_path("", s.g, "games", s.g.format);
  if (s.g.format == "json") {
    json games = json::array();
    for (const CompletedGame& g : result.games) {
      games.push_back({{"index", g.index}, {"score_p1", g.score_p1}, {"moves", g.moves}});
    }
    write_json(games_path, games);
  } else {
    std::ofstream f = detail::open_output(games_path);
    f << "index,score_p1,plies,moves\n";
    for (const CompletedGame& g : result.games) {
      f << g.index << ',' << g.score_p1 << ',' << g.moves.size() << ',';
      for (std::size_t k = 0; k < g.moves.size(); ++k) f << (k ? " " : "") << g.moves[k];
      f << '\n';
    }
  }
  out << "games completed " << result.stats.games_completed << ", examples " << result.examples.size()
      << ", eval calls " << result.stats.eval_calls << ", wall time " << result.stats.wall_time_us << " us\n";
  out << "wrote " << replay_path.string() << ", " << jsonl_path.string() << ", " << games_path.string() << '\n';
  return kExitOk;
}

int run_train(const State& s, std::ostream& out) {
  const TrainOpts& o = s.train;
  TrainLoopConfig cfg;
  cfg.rollout.game = parse_game_spec(o.game);
  cfg.rollout.algorithm = parse_algorithm(o.algo);
  cfg.rollout.n_sims = o.sims;
  cfg.rollout.c = o.c;
  cfg.rollout.games = o.games;
  cfg.rollout.parallel = o.parallel;
  cfg.rollout.temperature_plies = o.temperature_plies;
  cfg.iterations = o.iterations;
  cfg.hidden = o.hidden;
  if (!o.init.empty()) cfg.initial_checkpoint = o.init;
  cfg.buffer_capacity = o.buffer;
  cfg.batch_size = o.batch;
  cfg.steps_per_iteration = o.steps;
  cfg.learning_rate = o.lr;
  cfg.latency = latency(o.latency_us);
  cfg.arena_every = o.arena_every;
  cfg.arena_games_per_side = o.arena_games;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.out_dir = s.g.out_dir;
  cfg.seed = s.g.seed;
  const TrainLoopResult result = train_loop(cfg);
  json rows = json::array();
  for (const IterationMetrics& m : result.metrics) {
    out << "iteration " << m.iteration << ": games " << m.games << ", loss " << m.loss;
    if (m.arena_score) out << ", arena score " << *m.arena_score;
    out << '\n';
    json row = iteration_to_json(m);
    row.erase("rollout_time_us");
    row.erase("train_time_us");
    rows.push_back(row);
  }
  if (s.g.format == "json") write_json(std::filesystem::path(s.g.out_dir) / "metrics.json", rows);
  out << "wrote " << (std::filesystem::path(s.g.out_dir) / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

int run_serve(const State& s, std::ostream& out) {
  ServiceConfig cfg;
  cfg.default_agent = {parse_algorithm(s.serve.algo), s.serve.sims, s.serve.c, s.serve.evaluator};
  cfg.latency = latency(s.serve.latency_us);
  cfg.seed = s.g.seed;
  PlayServer server(cfg);
  out << "serving on http://" << s.serve.host << ':' << s.serve.port << std::endl;
  server.listen(s.serve.host, s.serve.port);
  return kExitOk;
}

int run_solve(const State& s, std::ostream& out) {
  const SolveOpts& o = s.solve;
  if (o.q.empty() || o.prior.empty()) throw UsageError("--q and --prior are required");
  if (o.q.size() != o.prior.size()) throw UsageError("--q and --prior must have the same length");
  PolicyOptProblem<double> p;
  p.q = Eigen::Map<const Eigen::VectorXd>(o.q.data(), static_cast<Eigen::Index>(o.q.size()));
  p.prior = Eigen::Map<const Eigen::VectorXd>(o.prior.data(), static_cast<Eigen::Index>(o.prior.size()));
  p.n_sims = o.sims;
  p.c = o.c;
  p.validate();
  const OptimizedPolicy<double> sol = solve_policy(p);
  const Eigen::VectorXd reverse = solve_reverse_kl(p);

  std::ostringstream text;
  text.precision(std::numeric_limits<double>::max_digits10);
  if (s.g.format == "json") {
    const auto as_vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    const json j = {{"q", o.q},
                    {"prior", o.prior},
                    {"n_sims", o.sims},
                    {"c", o.c},
                    {"lambda", p.lambda()},
                    {"u", sol.u},
                    {"iterations", sol.iterations},
                    {"pi_bar", as_vec(sol.pi_bar)},
                    {"reverse_kl", as_vec(reverse)}};
    text << j.dump(2) << '\n';
  } else {
    text << "action,q,prior,pi_bar,reverse_kl\n";
    for (Eigen::Index a = 0; a < p.q.size(); ++a) {
      text << a + 1 << ',' << p.q[a] << ',' << p.prior[a] << ',' << sol.pi_bar[a] << ',' << reverse[a] << '\n';
    }
  }
  out << "lambda " << p.lambda() << ", u " << sol.u << ", newton iterations " << sol.iterations << '\n';
  out << "pi_bar (" << std::setprecision(6);
  for (Eigen::Index a = 0; a < sol.pi_bar.size(); ++a) out << (a ? ", " : "") << sol.pi_bar[a];
  out << ")\n" << text.str();
  if (!o.out.empty()) {
    std::ofstream f = detail::open_output(o.out);
    f << text.str();
  }
  return kExitOk;
}

json resolved_json(const Parser& parser, const State& s) {
  json j = globals_json(s.g);
  const CLI::App* sub = parser.selected();
  j["command"] = sub->get_name();
  if (sub == parser.bench) {
    const BenchOpts& o = s.bench;
    j.update({{"game", o.game}, {"algo", o.algo}, {"sims", o.sims}, {"c", o.c}, {"roots", o.roots},
              {"latency_us", o.latency_us}, {"evaluator", o.evaluator}, {"multi", o.multi},
              {"out", output_path(o.out, s.g, "bench", s.g.format).string()}});
  } else if (sub == parser.arena) {
    const ArenaOpts& o = s.arena;
    j.update({{"game", o.game}, {"algo", o.algo}, {"sims", o.sims}, {"c", o.c}, {"games", o.games},
              {"latency_us", o.latency_us}, {"evaluator", o.evaluator}, {"opening_plies", o.opening_plies},
              {"out", output_path(o.out, s.g, "arena", s.g.format).string()}});
  } else if (sub == parser.bandit) {
    const BanditOpts& o = s.bandit;
    j.update({{"p", o.p}, {"sims", o.sims}, {"c", o.c},
              {"out", output_path(o.out, s.g, "bandit", s.g.format).string()}});
  } else if (sub == parser.selfplay) {
    const SelfplayOpts& o = s.selfplay;
    j.update({{"game", o.game}, {"algo", o.algo}, {"sims", o.sims}, {"c", o.c}, {"games", o.games},
              {"parallel", o.parallel}, {"temperature_plies", o.temperature_plies}, {"latency_us", o.latency_us},
              {"evaluator", o.evaluator}, {"budget_s", o.budget_s},
              {"out", output_path(o.out, s.g, "replay", "bin").string()}});
  } else if (sub == parser.train) {
    const TrainOpts& o = s.train;
    j.update({{"game", o.game}, {"algo", o.algo}, {"sims", o.sims}, {"c", o.c}, {"iterations", o.iterations},
              {"games", o.games}, {"parallel", o.parallel}, {"temperature_plies", o.temperature_plies},
              {"hidden", o.hidden}, {"batch", o.batch}, {"steps", o.steps}, {"lr", o.lr}, {"buffer", o.buffer},
              {"latency_us", o.latency_us}, {"arena_every", o.arena_every}, {"arena_games", o.arena_games},
              {"checkpoint_every", o.checkpoint_every}, {"init", o.init}});
  } else if (sub == parser.serve) {
    const ServeOpts& o = s.serve;
    j.update({{"host", o.host}, {"port", o.port}, {"algo", o.algo}, {"sims", o.sims}, {"c", o.c},
              {"evaluator", o.evaluator}, {"latency_us", o.latency_us}});
  } else if (sub == parser.solve) {
    const SolveOpts& o = s.solve;
  if (o.q.empty() || o.prior.empty()) throw UsageError("--q and --prior are required");
    j.update({{"q", o.q}, {"prior", o.prior}, {"sims", o.sims}, {"c", o.c}, {"out", o.out}});
  }
  return j;
}

int dispatch(const Parser& parser, const State& s, std::ostream& out) {
  const CLI::App* sub = parser.selected();
  if (sub == parser.bench) return run_bench(s, out);
  if (sub == parser.arena) return run_arena(s, out);
  if (sub == parser.bandit) return run_bandit(s, out);
  if (sub == parser.selfplay) return run_selfplay(s, out);
  if (sub == parser.train) return run_train(s, out);
  if (sub == parser.serve) return run_serve(s, out);
  return run_solve(s, out);
}

/// Parses into `parser`; returns an exit code when the run should stop here.
std::optional<int> parse(Parser& parser, std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  std::reverse(args.begin(), args.end());
  try {
    parser.app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return parser.app.exit(e, out, err);
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }
  return std::nullopt;
}

}  // namespace

GameConfig parse_game_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const auto bad = [&] { return std::invalid_argument("bad game spec '" + spec + "'"); };
  const auto to_int = [&](const std::string& text) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(text, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != text.size()) throw bad();
    return v;
  };
  const auto dims = [&](const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw bad();
    return std::pair{to_int(text.substr(0, x)), to_int(text.substr(x + 1))};
  };
  GameConfig config;
  switch (parse_game_kind(name)) {
    case GameKind::Connect4: {
      if (rest.empty()) {
        config = GameConfig::connect4();
        break;
      }
      const auto second = rest.find(':');
      const auto [w, h] = dims(rest.substr(0, second));
      const int k = second == std::string::npos ? 4 : to_int(rest.substr(second + 1));
      config = GameConfig::connect4(w, h, k);
      break;
    }
    case GameKind::Othello: config = rest.empty() ? GameConfig::othello() : GameConfig::othello(to_int(rest)); break;
    case GameKind::DotsAndBoxes: {
      if (rest.empty()) {
        config = GameConfig::dots_and_boxes();
        break;
      }
      const auto [r, c] = dims(rest);
      config = GameConfig::dots_and_boxes(r, c);
      break;
    }
    default: throw std::invalid_argument("game '" + name + "' is not playable from the command line");
  }
  config.validate();
  return config;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto state = std::make_unique<State>();
  auto parser = std::make_unique<Parser>(*state);
  if (const auto code = parse(*parser, args, out, err)) return *code;

  try {
    if (!state->g.config.empty()) {
      const std::vector<std::string> merged = merge_config(*parser, state->g.config, args);
      state = std::make_unique<State>();
      parser = std::make_unique<Parser>(*state);
      if (const auto code = parse(*parser, merged, out, err)) return *code;
    }
    out << "resolved config: " << resolved_json(*parser, *state).dump() << std::endl;
    return dispatch(*parser, *state, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace rmcts
