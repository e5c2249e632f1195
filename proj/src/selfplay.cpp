#include "rmcts/selfplay.hpp"

#include <cstdio>
#include <cstring>
#include <random>
#include <stdexcept>

#include "byte_io.hpp"
#include "rmcts/arena.hpp"
#include "run_util.hpp"

namespace rmcts {

namespace {

using detail::Clock;
using detail::micros_since;

constexpr char kReplayMagic[8] = {'R', 'M', 'C', 'T', 'S', 'R', 'P', 'L'};
constexpr std::uint32_t kReplayVersion = 1;

struct LiveGame {
  std::uint64_t index = 0;
  GameState state;
  Rng rng;
  std::vector<Action> moves;
  std::vector<Player> movers;
  std::vector<Eigen::VectorXd> encodings;
  std::vector<Eigen::VectorXd> policies;
};

Action choose_move(LiveGame& game, const Eigen::VectorXd& policy, const SearchResult& result, int temperature_plies) {
  if (static_cast<int>(game.moves.size()) < temperature_plies) {
    std::discrete_distribution<int> pick(policy.data(), policy.data() + policy.size());
    return pick(game.rng);
  }
  return best_action(result);
}

void finish_game(LiveGame& game, RolloutResult& out) {
  CompletedGame done;
  done.index = game.index;
  done.moves = std::move(game.moves);
  done.score_p1 = terminal_score(game.state, Player::P1);
  done.first_example = out.examples.size();
  for (std::size_t k = 0; k < game.encodings.size(); ++k) {
    ReplayExample ex;
    ex.encoding = std::move(game.encodings[k]);
    ex.target_policy = std::move(game.policies[k]);
    ex.target_value = terminal_score(game.state, game.movers[k]);
    out.examples.push_back(std::move(ex));
  }
  out.games.push_back(std::move(done));
}

void write_vector(detail::ByteWriter& w, const Eigen::VectorXd& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Eigen::VectorXd read_vector(detail::ByteReader& r) {
  const std::uint32_t n = r.u32();
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::uint32_t i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

const char* const kMetricsHeader =
    "iteration,games,examples,buffer_size,loss,value_loss,policy_loss,eval_calls,arena_score";
const char* const kTimingHeader = "iteration,rollout_time_us,train_time_us";

}  // namespace

void RolloutConfig::validate() const {
  game.validate();
  if (is_one_player(game)) throw std::invalid_argument("rollouts: the game must have two players");
  if (n_sims < (algorithm == Algorithm::Ucb ? 2 : 1)) throw std::invalid_argument("rollouts: n_sims too small");
  if (!(c > 0.0)) throw std::invalid_argument("rollouts: c must be positive");
  if (games < 0) throw std::invalid_argument("rollouts: games must be non-negative");
  if (parallel < 1) throw std::invalid_argument("rollouts: parallel must be positive");
  if (temperature_plies < 0) throw std::invalid_argument("rollouts: temperature_plies must be non-negative");
}

RolloutResult generate_rollouts(const RolloutConfig& config, const Evaluator& evaluator,
                                std::optional<double> budget_us) {
  config.validate();
  if (budget_us && !(*budget_us > 0.0)) throw std::invalid_argument("rollouts: budget must be positive");
  const auto start = Clock::now();
  const auto out_of_time = [&] { return budget_us && micros_since(start) >= *budget_us; };

  RolloutResult out;
  std::vector<LiveGame> live;
  const auto refill = [&] {
    while (static_cast<int>(live.size()) < config.parallel &&
           (budget_us ? !out_of_time() : out.stats.games_started < config.games)) {
      const auto index = static_cast<std::uint64_t>(out.stats.games_started++);
      live.push_back({index, GameState::initial(config.game), Rng(mix64(config.seed, index)), {}, {}, {}, {}});
    }
  };
  refill();

  std::vector<GameState> roots;
  while (!live.empty() && !out_of_time()) {
    roots.clear();
    for (const LiveGame& g : live) roots.push_back(g.state);
    SearchParams params;
    params.algorithm = config.algorithm;
    params.n_sims = config.n_sims;
    params.c = config.c;
    params.seed = mix64(mix64(config.seed, 0x5E1F), out.stats.search_steps);
    const MultiSearchResult searched = search_multi(roots, params, evaluator);
    ++out.stats.search_steps;
    out.stats.eval_calls += searched.stats.eval_calls;
    out.stats.eval_items += searched.stats.eval_items;

    for (std::size_t i = 0; i < live.size(); ++i) {
      LiveGame& g = live[i];
      const SearchResult& r = searched.results[i];
      const Eigen::VectorXd& policy = *r.policy;
      const Action action = choose_move(g, policy, r, config.temperature_plies);
      g.encodings.push_back(encode(g.state));
      g.policies.push_back(policy);
      g.movers.push_back(g.state.to_move());
      g.moves.push_back(action);
      g.state = apply(g.state, action);
    }
    std::vector<LiveGame> still_live;
    still_live.reserve(live.size());
    for (LiveGame& g : live) {
      if (g.state.is_terminal()) {
        finish_game(g, out);
        ++out.stats.games_completed;
      } else {
        still_live.push_back(std::move(g));
      }
    }
    live = std::move(still_live);
    refill();
  }
  out.stats.wall_time_us = micros_since(start);
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(ReplayExample example) {
  ++total_added_;
  if (data_.size() < capacity_) {
    data_.push_back(std::move(example));
    return;
  }
  data_[head_] = std::move(example);
  head_ = (head_ + 1) % capacity_;
}

void ReplayBuffer::add(std::span<const ReplayExample> examples) {
  for (const ReplayExample& ex : examples) add(ex);
}

const ReplayExample& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay buffer: index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<ReplayExample> ReplayBuffer::sample(std::size_t count, Rng& rng) {
  if (data_.empty()) throw std::logic_error("replay buffer: cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<ReplayExample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(data_[pick(rng)]);
  total_sampled_ += count;
  return out;
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
  detail::ByteWriter w;
  w.raw(kReplayMagic, sizeof kReplayMagic);
  w.u32(kReplayVersion);
  w.u64(capacity_);
  w.u64(total_added_);
  w.u64(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const ReplayExample& ex = at(i);
    detail::ByteWriter record;
    write_vector(record, ex.encoding);
    write_vector(record, ex.target_policy);
    record.f64(ex.target_value);
    const std::vector<std::uint8_t> bytes = record.take();
    w.u32(static_cast<std::uint32_t>(bytes.size()));
    w.raw(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  const std::vector<std::uint8_t> bytes = w.take();
  std::ofstream out = detail::open_output(path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(bytes, "replay buffer");
  const auto magic = r.raw(sizeof kReplayMagic);
  if (std::memcmp(magic.data(), kReplayMagic, sizeof kReplayMagic) != 0)
    throw std::runtime_error("replay buffer: bad magic");
  if (r.u32() != kReplayVersion) throw std::runtime_error("replay buffer: unsupported version");
  const std::uint64_t capacity = r.u64();
  const std::uint64_t total_added = r.u64();
  const std::uint64_t count = r.u64();
  if (capacity == 0 || count > capacity || total_added < count) throw std::runtime_error("replay buffer: bad header");
  ReplayBuffer buffer(static_cast<std::size_t>(capacity));
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t length = r.u32();
    detail::ByteReader record(r.raw(length), "replay buffer");
    ReplayExample ex;
    ex.encoding = read_vector(record);
    ex.target_policy = read_vector(record);
    ex.target_value = record.f64();
    if (!record.done()) throw std::runtime_error("replay buffer: record length mismatch");
    buffer.add(std::move(ex));
  }
  if (!r.done()) throw std::runtime_error("replay buffer: trailing bytes");
  buffer.total_added_ = total_added;
  return buffer;
}

void ReplayBuffer::export_jsonl(const std::filesystem::path& path) const {
  std::ofstream out = detail::open_output(path);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const ReplayExample& ex = at(i);
    const nlohmann::json line = {
        {"encoding", vector_json(ex.encoding)}, {"policy", vector_json(ex.target_policy)}, {"value", ex.target_value}};
    out << line.dump() << '\n';
  }
}

bool operator==(const ReplayBuffer& a, const ReplayBuffer& b) {
  if (a.capacity_ != b.capacity_ || a.total_added_ != b.total_added_ || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ReplayExample& x = a.at(i);
    const ReplayExample& y = b.at(i);
    if (x.encoding.size() != y.encoding.size() || x.target_policy.size() != y.target_policy.size()) return false;
    if (x.encoding != y.encoding || x.target_policy != y.target_policy || x.target_value != y.target_value)
      return false;
  }
  return true;
}

void TrainLoopConfig::validate() const {
  rollout.validate();
  if (iterations < 0) throw std::invalid_argument("train: iterations must be non-negative");
  if (hidden < 1) throw std::invalid_argument("train: hidden must be positive");
  if (buffer_capacity == 0) throw std::invalid_argument("train: buffer capacity must be positive");
  if (batch_size < 1 || steps_per_iteration < 0) throw std::invalid_argument("train: bad batch settings");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be non-negative");
  if (arena_every < 0 || arena_games_per_side < 1) throw std::invalid_argument("train: bad arena settings");
  if (checkpoint_every < 0) throw std::invalid_argument("train: checkpoint_every must be non-negative");
}

TrainLoopResult train_loop(const TrainLoopConfig& config) {
  config.validate();
  const GameConfig& game = config.rollout.game;
  ModelCheckpoint net = config.initial_checkpoint ? load_checkpoint(*config.initial_checkpoint)
                                                  : ModelCheckpoint::random(game, config.hidden, mix64(config.seed, 0x1E7));
  if (!(net.config == game)) throw std::invalid_argument("train: checkpoint was built for a different game");
  const auto baseline = with_latency(
      std::make_shared<TinyNetEvaluator>(std::make_shared<const ModelCheckpoint>(net)), config.latency);

  std::filesystem::create_directories(config.out_dir);
  std::ofstream metrics_csv = detail::open_output(config.out_dir / "metrics.csv");
  metrics_csv << kMetricsHeader << '\n' << std::flush;
  std::ofstream timing_csv = detail::open_output(config.out_dir / "timing.csv");
  timing_csv << kTimingHeader << '\n' << std::flush;

  ReplayBuffer buffer(config.buffer_capacity);
  Rng sample_rng(mix64(config.seed, 0x5A3B1E));
  TrainLoopResult result;
  result.history.push_back(net);

  for (int it = 1; it <= config.iterations; ++it) {
    IterationMetrics m;
    m.iteration = it;
    const auto current = with_latency(
        std::make_shared<TinyNetEvaluator>(std::make_shared<const ModelCheckpoint>(net)), config.latency);

    RolloutConfig rc = config.rollout;
    rc.seed = mix64(config.seed, static_cast<std::uint64_t>(it));
    const RolloutResult rollouts = generate_rollouts(rc, *current);
    buffer.add(rollouts.examples);
    m.games = rollouts.stats.games_completed;
    m.examples = rollouts.examples.size();
    m.buffer_size = buffer.size();
    m.eval_calls = rollouts.stats.eval_calls;
    m.rollout_time_us = rollouts.stats.wall_time_us;

    const auto train_start = Clock::now();
    if (buffer.size() > 0) {
      for (int step = 0; step < config.steps_per_iteration; ++step) {
        const auto batch = buffer.sample(static_cast<std::size_t>(config.batch_size), sample_rng);
        const TrainStats s = tiny_net_train_step(net, batch, config.learning_rate);
        m.loss += s.loss;
        m.value_loss += s.value_loss;
        m.policy_loss += s.policy_loss;
      }
      if (config.steps_per_iteration > 0) {
        const double steps = config.steps_per_iteration;
        m.loss /= steps;
        m.value_loss /= steps;
        m.policy_loss /= steps;
      }
    }
    m.train_time_us = micros_since(train_start);

    if (config.arena_every > 0 && it % config.arena_every == 0) {
      MatchConfig match;
      match.game = game;
      match.a = {rc.algorithm, rc.n_sims, rc.c, "tinynet"};
      match.b = match.a;
      match.games_per_side = config.arena_games_per_side;
      match.seed = mix64(config.seed, 0xA7E4A + static_cast<std::uint64_t>(it));
      match.latency = config.latency;
      const auto trained = with_latency(
          std::make_shared<TinyNetEvaluator>(std::make_shared<const ModelCheckpoint>(net)), config.latency);
      m.arena_score = play_match(match, *trained, *baseline).mean_score;
    }

    metrics_csv << m.iteration << ',' << m.games << ',' << m.examples << ',' << m.buffer_size << ',' << m.loss << ','
                << m.value_loss << ',' << m.policy_loss << ',' << m.eval_calls << ',';
    if (m.arena_score) metrics_csv << *m.arena_score;
    metrics_csv << '\n' << std::flush;
    timing_csv << m.iteration << ',' << m.rollout_time_us << ',' << m.train_time_us << '\n' << std::flush;
    result.metrics.push_back(m);
    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "checkpoint_%04d.bin", it);
      save_checkpoint(net, config.out_dir / name);
      result.history.push_back(net);
    }
  }

  save_checkpoint(net, config.out_dir / "checkpoint.bin");
  buffer.save(config.out_dir / "replay.bin");
  result.checkpoint = std::move(net);
  return result;
}

nlohmann::json iteration_to_json(const IterationMetrics& m) {
  nlohmann::json j = {{"iteration", m.iteration},       {"games", m.games},
                      {"examples", m.examples},         {"buffer_size", m.buffer_size},
                      {"loss", m.loss},                 {"value_loss", m.value_loss},
                      {"policy_loss", m.policy_loss},   {"eval_calls", m.eval_calls},
                      {"rollout_time_us", m.rollout_time_us}, {"train_time_us", m.train_time_us}};
  j["arena_score"] = m.arena_score ? nlohmann::json(*m.arena_score) : nlohmann::json(nullptr);
  return j;
}

}  // namespace rmcts
