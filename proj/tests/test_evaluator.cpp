#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "rmcts/evaluator.hpp"
#include "rmcts/tiny_net.hpp"

using namespace rmcts;

namespace {

std::vector<GameState> random_positions(const GameConfig& cfg, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GameState> out;
  while (static_cast<int>(out.size()) < count) {
    GameState s = GameState::initial(cfg);
    const int plies = static_cast<int>(rng() % 12);
    for (int i = 0; i < plies && !s.is_terminal(); ++i) {
      const auto legal = legal_actions(s);
      s = apply(s, legal[rng() % legal.size()]);
    }
    if (!s.is_terminal()) out.push_back(s);
  }
  return out;
}

std::vector<ReplayExample> random_batch(const GameConfig& cfg, int count, std::mt19937_64& rng) {
  std::vector<ReplayExample> batch;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const GameState& s : random_positions(cfg, count, rng())) {
    ReplayExample ex;
    ex.encoding = encode(s);
    ex.target_policy = Eigen::VectorXd::Zero(action_space_size(cfg));
    const auto legal = legal_actions(s);
    for (Action a : legal) ex.target_policy[a] = std::abs(u(rng)) + 0.01;
    ex.target_policy /= ex.target_policy.sum();
    ex.target_value = u(rng) * max_score(cfg);
    batch.push_back(std::move(ex));
  }
  return batch;
}

}  // namespace

TEST_CASE("mask and renormalize") {
  const std::vector<Action> legal{1, 3};
  Eigen::VectorXd raw(4);
  raw << 0.4, 0.1, 0.2, 0.3;
  const Eigen::VectorXd m = mask_and_renormalize(raw, legal);
  CHECK(m[0] == 0.0);
  CHECK(m[2] == 0.0);
  CHECK(m[1] == doctest::Approx(0.25));
  CHECK(m[3] == doctest::Approx(0.75));

  raw << 1.0, 0.0, 1.0, 0.0;
  const Eigen::VectorXd u = mask_and_renormalize(raw, legal);
  CHECK(u[1] == 0.5);
  CHECK(u[3] == 0.5);

  raw << 0.0, std::nan(""), 0.0, -2.0;
  const Eigen::VectorXd n = mask_and_renormalize(raw, legal);
  CHECK(n[1] == 0.5);
  CHECK(n[3] == 0.5);
}

TEST_CASE("evaluations are masked distributions within score bounds") {
  const auto net = std::make_shared<const ModelCheckpoint>(ModelCheckpoint::random(GameConfig::othello(6), 16, 4));
  for (const GameConfig& cfg : {GameConfig::connect4(), GameConfig::othello(6), GameConfig::dots_and_boxes(2, 2)}) {
    const std::vector<std::shared_ptr<const Evaluator>> evaluators{
        std::make_shared<UniformEvaluator>(), std::make_shared<HeuristicEvaluator>(),
        std::make_shared<TinyNetEvaluator>(
            std::make_shared<const ModelCheckpoint>(ModelCheckpoint::random(cfg, 16, 4)))};
    const auto states = random_positions(cfg, 200, 1);
    for (const auto& ev : evaluators) {
      CAPTURE(ev->name());
      for (const GameState& s : states) {
        const Evaluation e = ev->evaluate(s);
        REQUIRE(e.policy.size() == action_space_size(cfg));
        CHECK(std::abs(e.policy.sum() - 1.0) < 1e-12);
        CHECK(e.policy.minCoeff() >= 0.0);
        CHECK(std::abs(e.value) <= max_score(cfg));
        for (Action a = 0; a < action_space_size(cfg); ++a) {
          if (!is_legal(s, a)) CHECK(e.policy[a] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("batch evaluation equals per-state evaluation") {
  const GameConfig cfg = GameConfig::connect4();
  const auto states = random_positions(cfg, 50, 2);
  const std::vector<std::shared_ptr<const Evaluator>> evaluators{
      std::make_shared<UniformEvaluator>(), std::make_shared<HeuristicEvaluator>(),
      std::make_shared<TinyNetEvaluator>(std::make_shared<const ModelCheckpoint>(ModelCheckpoint::random(cfg, 32, 9)))};
  for (const auto& ev : evaluators) {
    const auto batch = ev->evaluate_batch(states);
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Evaluation single = ev->evaluate(states[i]);
      CHECK(single.value == batch[i].value);
      CHECK(single.policy == batch[i].policy);
    }
  }
}

TEST_CASE("counters and terminal rejection") {
  UniformEvaluator ev;
  const auto states = random_positions(GameConfig::connect4(), 5, 3);
  ev.evaluate_batch(states);
  ev.evaluate(states[0]);
  CHECK(ev.calls() == 2);
  CHECK(ev.items() == 6);
  ev.reset_counters();
  CHECK(ev.calls() == 0);

  GameState s = GameState::initial(GameConfig::connect4());
  for (const char* m : {"1", "2", "1", "2", "1", "2", "1"}) s = apply(s, parse_move(s.config(), m));
  CHECK_THROWS_AS(ev.evaluate(s), std::invalid_argument);
}

TEST_CASE("heuristic evaluator sanity") {
  HeuristicEvaluator ev;
  CHECK(ev.evaluate(GameState::initial(GameConfig::othello(8))).value == 0.0);
  CHECK(ev.evaluate(GameState::initial(GameConfig::othello(6))).value == 0.0);

  // P1 has an open three in the bottom row and is to move.
  GameState c = GameState::initial(GameConfig::connect4());
  for (const char* m : {"3", "1", "4", "7", "5", "1"}) c = apply(c, parse_move(c.config(), m));
  CHECK(ev.evaluate(c).value > 0.0);

  // With one box completable, its closing edge gets the most prior mass.
  const GameConfig dots = GameConfig::dots_and_boxes(2, 2);
  GameState d = GameState::initial(dots);
  for (const char* m : {"h 0 0", "h 1 0", "v 0 0"}) d = apply(d, parse_move(dots, m));
  const Evaluation e = ev.evaluate(d);
  Eigen::Index best = 0;
  e.policy.maxCoeff(&best);
  CHECK(best == parse_move(dots, "v 0 1"));
}

TEST_CASE("tiny net gradient matches central finite differences") {
  std::mt19937_64 rng(123);
  const GameConfig cfg = GameConfig::connect4(4, 4, 3);
  int checked = 0;
  for (int draw = 0; draw < 100; ++draw) {
    ModelCheckpoint net = ModelCheckpoint::random(cfg, 6, rng(), 1.0);
    net.bv = 0.1;
    const auto batch = random_batch(cfg, 4, rng);
    const Eigen::VectorXd grad = tiny_net_gradient(net, batch);
    const Eigen::VectorXd theta = net.flat();
    REQUIRE(grad.size() == theta.size());
    const double h = 1e-5;
    Eigen::VectorXd fd(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd t = theta;
      t[i] += h;
      net.set_flat(t);
      const double up = tiny_net_loss(net, batch).loss;
      t[i] -= 2 * h;
      net.set_flat(t);
      const double down = tiny_net_loss(net, batch).loss;
      fd[i] = (up - down) / (2 * h);
    }
    net.set_flat(theta);
    const double rel = (fd - grad).norm() / std::max(grad.norm(), 1e-12);
    CHECK(rel < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("sgd on a fixed batch decreases the loss monotonically") {
  std::mt19937_64 rng(8);
  const GameConfig cfg = GameConfig::connect4(4, 4, 3);
  ModelCheckpoint net = ModelCheckpoint::random(cfg, 16, 8);
  const auto batch = random_batch(cfg, 32, rng);
  double previous = INFINITY;
  for (int step = 0; step < 200; ++step) {
    const TrainStats s = tiny_net_train_step(net, batch, 0.01);
    if (step >= 10) CHECK(s.loss <= previous);
    previous = s.loss;
  }
  CHECK(net.step == 200);
  CHECK(tiny_net_loss(net, batch).loss < tiny_net_loss(ModelCheckpoint::random(cfg, 16, 8), batch).loss);
}

TEST_CASE("zero learning rate and stationary points leave weights unchanged") {
  std::mt19937_64 rng(10);
  const GameConfig cfg = GameConfig::connect4(4, 4, 3);
  ModelCheckpoint net = ModelCheckpoint::random(cfg, 8, 10);
  const auto before = net.flat();
  tiny_net_train_step(net, random_batch(cfg, 8, rng), 0.0);
  CHECK(net.flat() == before);
  CHECK(net.step == 1);

  // A zero net predicts value 0 and a uniform policy; matching targets give a zero gradient.
  ModelCheckpoint zero = ModelCheckpoint::zeros(cfg, 8);
  ReplayExample ex;
  ex.encoding = encode(GameState::initial(cfg));
  ex.target_policy = Eigen::VectorXd::Constant(action_space_size(cfg), 1.0 / action_space_size(cfg));
  ex.target_value = 0.0;
  const std::vector<ReplayExample> batch{ex, ex};
  CHECK(tiny_net_gradient(zero, batch).cwiseAbs().maxCoeff() < 1e-15);
  tiny_net_train_step(zero, batch, 0.5);
  CHECK(zero.flat().isZero());

  CHECK_THROWS_AS(tiny_net_train_step(net, std::vector<ReplayExample>{}, 0.1), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  const ModelCheckpoint net = ModelCheckpoint::random(GameConfig::othello(6), 12, 77);
  const auto bytes = checkpoint_to_bytes(net);
  CHECK(bytes.size() == 8 + 4 + 4 + 12 + 64 + 12 + 8 + 8 * net.parameter_count());
  CHECK(checkpoint_from_bytes(bytes) == net);

  const auto path = std::filesystem::temp_directory_path() / "rmcts_test_checkpoint.bin";
  save_checkpoint(net, path);
  const ModelCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded == net);
  CHECK(loaded.flat() == net.flat());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(checkpoint_from_bytes(bad));
  CHECK_THROWS(checkpoint_from_bytes(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 1)));

  const auto j = checkpoint_to_json(net);
  CHECK(j.at("architecture").at("hidden") == 12);
  CHECK(j.at("step") == 0);

  const auto ev = make_evaluator("tinynet:" + path.string(), GameConfig::othello(6));
  CHECK(ev->name() == "tinynet");
  CHECK_THROWS(make_evaluator("tinynet:" + path.string(), GameConfig::connect4()));
  std::filesystem::remove(path);
}

TEST_CASE("make_evaluator ids") {
  CHECK(make_evaluator("uniform", GameConfig::connect4())->name() == "uniform");
  CHECK(make_evaluator("heuristic", GameConfig::connect4())->name() == "heuristic");
  CHECK_THROWS_AS(make_evaluator("oracle", GameConfig::connect4()), std::invalid_argument);
}

TEST_CASE("latency wrapper") {
  const auto inner = std::make_shared<const UniformEvaluator>();
  CHECK(with_latency(inner, LatencyModel{}) == inner);

  const auto slow = with_latency(inner, LatencyModel{2000.0, 100.0});
  const auto states = random_positions(GameConfig::connect4(), 10, 4);
  const auto start = std::chrono::steady_clock::now();
  const auto out = slow->evaluate_batch(states);
  const double elapsed =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed >= 3000.0);
  CHECK(elapsed < 50000.0);
  CHECK(out.size() == states.size());
  CHECK(out[0].policy == inner->evaluate(states[0]).policy);
}
