#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles/minimax.hpp"
#include "rmcts/games.hpp"

using namespace rmcts;

namespace {

GameState play(GameState s, std::initializer_list<const char*> moves) {
  for (const char* m : moves) s = apply(s, parse_move(s.config(), m));
  return s;
}

// Independent placement check for Othello: a move is legal if some ray from the
// cell crosses at least one opposing disc and ends on an own disc.
std::set<Action> othello_placements_oracle(const GameState& s) {
  const int n = s.config().width;
  const auto cells = s.cells();
  const int me = s.to_move() == Player::P1 ? 1 : 2;
  std::set<Action> out;
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      if (cells[row * n + col] != 0) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          std::vector<int> ray;
          for (int r = row + dr, c = col + dc; r >= 0 && r < n && c >= 0 && c < n; r += dr, c += dc) {
            ray.push_back(cells[r * n + c]);
          }
          std::size_t k = 0;
          while (k < ray.size() && ray[k] == 3 - me) ++k;
          if (k > 0 && k < ray.size() && ray[k] == me) out.insert(row * n + col);
        }
      }
    }
  }
  return out;
}

bool connect_line_exists(const GameState& s) {
  const GameConfig& c = s.config();
  const auto cells = s.cells();
  for (int r = 0; r < c.height; ++r)
    for (int col = 0; col < c.width; ++col)
      for (auto [dr, dc] : {std::pair{0, 1}, {1, 0}, {1, 1}, {1, -1}}) {
        const int who = cells[r * c.width + col];
        if (who == 0) continue;
        int k = 1;
        for (int i = 1; i < c.connect_k; ++i) {
          const int rr = r + i * dr;
          const int cc = col + i * dc;
          if (rr < 0 || rr >= c.height || cc < 0 || cc >= c.width || cells[rr * c.width + cc] != who) break;
          ++k;
        }
        if (k == c.connect_k) return true;
      }
  return false;
}

// Plain alpha-beta without memoization, as a second route to the game value.
double alphabeta(const GameState& s, double alpha, double beta) {
  if (s.is_terminal()) return terminal_score(s, s.to_move());
  double best = -2.0;
  for (Action a : legal_actions(s)) {
    const double v = -alphabeta(apply(s, a), -beta, -alpha);
    best = std::max(best, v);
    alpha = std::max(alpha, v);
    if (alpha >= beta) break;
  }
  return best;
}

}  // namespace

TEST_CASE("connect4 legal actions and gravity") {
  const GameConfig cfg = GameConfig::connect4();
  GameState s = GameState::initial(cfg);
  CHECK(legal_actions(s) == std::vector<Action>{0, 1, 2, 3, 4, 5, 6});

  s = play(s, {"1", "1", "1", "1", "1", "1"});
  CHECK(legal_actions(s) == std::vector<Action>{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(apply(s, 0), IllegalAction);

  GameState g = play(GameState::initial(cfg), {"4"});
  CHECK(g.cells()[3] == 1);
  g = play(g, {"4"});
  CHECK(g.cells()[cfg.width + 3] == 2);
  CHECK(g.cells()[2 * cfg.width + 3] == 0);
}

TEST_CASE("connect4 scoring") {
  const GameConfig cfg = GameConfig::connect4();
  const GameState win = play(GameState::initial(cfg), {"1", "2", "1", "2", "1", "2", "1"});
  REQUIRE(win.is_terminal());
  CHECK(terminal_score(win, Player::P1) == 1.0);
  CHECK(terminal_score(win, Player::P2) == -1.0);
  CHECK(legal_actions(win).empty());

  CHECK_THROWS_AS(terminal_score(GameState::initial(cfg), Player::P1), NotTerminal);

  // Find full boards without a line via random play; they must score zero.
  Rng rng(3);
  int draws = 0;
  for (int game = 0; game < 2000 && draws < 5; ++game) {
    GameState s = GameState::initial(GameConfig::connect4(4, 4, 4));
    while (!s.is_terminal()) {
      const auto legal = legal_actions(s);
      s = apply(s, legal[rng() % legal.size()]);
    }
    if (s.move_count() == 16 && !connect_line_exists(s)) {
      CHECK(terminal_score(s, Player::P1) == 0.0);
      ++draws;
    }
  }
  CHECK(draws == 5);
}

TEST_CASE("othello initial moves match the rules oracle") {
  const GameState s = GameState::initial(GameConfig::othello(8));
  const auto legal = legal_actions(s);
  const std::set<Action> got(legal.begin(), legal.end());
  CHECK(got == othello_placements_oracle(s));
  const GameConfig& cfg = s.config();
  CHECK(got == std::set<Action>{parse_move(cfg, "d3"), parse_move(cfg, "c4"), parse_move(cfg, "f5"),
                                parse_move(cfg, "e6")});
}

TEST_CASE("othello pass semantics and scoring") {
  Rng rng(11);
  int passes_seen = 0;
  int finished = 0;
  for (int game = 0; game < 300; ++game) {
    GameState s = GameState::initial(GameConfig::othello(game % 2 == 0 ? 4 : 6));
    const Action pass = othello_pass(s.config());
    while (!s.is_terminal()) {
      const auto legal = legal_actions(s);
      const auto oracle = othello_placements_oracle(s);
      if (oracle.empty()) {
        REQUIRE(legal == std::vector<Action>{pass});
        const GameState t = apply(s, pass);
        CHECK(std::equal(t.cells().begin(), t.cells().end(), s.cells().begin()));
        CHECK(t.to_move() == opponent(s.to_move()));
        ++passes_seen;
      } else {
        CHECK(std::set<Action>(legal.begin(), legal.end()) == oracle);
        CHECK(std::find(legal.begin(), legal.end(), pass) == legal.end());
      }
      s = apply(s, legal[rng() % legal.size()]);
    }
    const auto counts = piece_counts(s);
    CHECK(terminal_score(s, Player::P1) == counts[0] - counts[1]);
    ++finished;
  }
  CHECK(passes_seen > 0);
  CHECK(finished == 300);
}

TEST_CASE("dots and boxes extra turn") {
  const GameConfig cfg = GameConfig::dots_and_boxes(1, 1);
  GameState s = play(GameState::initial(cfg), {"h 0 0", "h 1 0", "v 0 0"});
  CHECK(s.to_move() == Player::P2);
  const GameState t = apply(s, parse_move(cfg, "v 0 1"));
  CHECK(t.to_move() == Player::P2);
  CHECK(sgn_between(s, t) == 1);
  REQUIRE(t.is_terminal());
  CHECK(terminal_score(t, Player::P2) == 1.0);
  CHECK(terminal_score(t, Player::P1) == -1.0);

  const GameState u = play(GameState::initial(GameConfig::dots_and_boxes(2, 2)), {"h 0 0"});
  CHECK(u.to_move() == Player::P2);
}

TEST_CASE("sgn between states") {
  const GameState s = GameState::initial(GameConfig::connect4());
  CHECK(sgn_between(s, apply(s, 3)) == -1);
  CHECK(sgn_between(s, s) == 1);
  const GameState tree = GameState::initial(GameConfig::binary_tree());
  CHECK(sgn_between(tree, apply(tree, 1)) == 1);
}

TEST_CASE("encode") {
  const GameConfig cfg = GameConfig::connect4();
  const GameState empty = GameState::initial(cfg);
  const Eigen::VectorXd e = encode(empty);
  CHECK(e.size() == encoding_size(cfg));
  CHECK(e.isZero());

  const GameState a = play(empty, {"1", "2", "3"});
  const GameState b = play(empty, {"3", "2", "1"});
  CHECK(encode(a) == encode(b));
  CHECK(encode(apply(a, 4)) != encode(a));

  // Perspective: after one move the mover's disc is on the opponent plane.
  const GameState one = play(empty, {"1"});
  CHECK(encode(one)[cfg.width * cfg.height + 0] == 1.0);
  CHECK(encode(one)[0] == 0.0);
}

TEST_CASE("move parsing") {
  CHECK(parse_move(GameConfig::connect4(), "4") == 3);
  const GameConfig oth = GameConfig::othello(8);
  CHECK(parse_move(oth, "d3") == 2 * 8 + 3);
  CHECK(parse_move(oth, "pass") == othello_pass(oth));
  CHECK_THROWS_AS(parse_move(oth, "zz"), MoveParseError);
  CHECK_THROWS_AS(parse_move(GameConfig::connect4(), "zz"), MoveParseError);
  CHECK_THROWS_AS(parse_move(GameConfig::connect4(), "8"), MoveParseError);
  CHECK_THROWS_AS(parse_move(GameConfig::dots_and_boxes(2, 2), "d 0 0"), MoveParseError);
  CHECK_THROWS_AS(parse_move(GameConfig::dots_and_boxes(2, 2), "h 3 0"), MoveParseError);

  for (const GameConfig& cfg : {GameConfig::connect4(), GameConfig::othello(6), GameConfig::dots_and_boxes(2, 3),
                                GameConfig::binary_tree(), GameConfig::bandit(std::vector<double>{0.6, 0.4})}) {
    for (Action a = 0; a < action_space_size(cfg); ++a) CHECK(parse_move(cfg, format_move(cfg, a)) == a);
  }
}

TEST_CASE("render is a stable diagram") {
  const GameConfig cfg = GameConfig::connect4(4, 4, 3);
  const GameState s = play(GameState::initial(cfg), {"1", "2"});
  CHECK(render(s) == " . . . .\n . . . .\n . . . .\n X O . .\n 1 2 3 4\nX to move\n");
  const GameState d = play(GameState::initial(GameConfig::dots_and_boxes(1, 1)), {"h 0 0", "v 0 1"});
  CHECK(render(d) == "+---+\n    |\n+   +\nX to move\n");
}

TEST_CASE("random playouts: termination, antisymmetry, box conservation") {
  const std::vector<GameConfig> configs{GameConfig::connect4(), GameConfig::othello(6), GameConfig::othello(8),
                                        GameConfig::dots_and_boxes(2, 2), GameConfig::dots_and_boxes(3, 3)};
  Rng rng(42);
  for (const GameConfig& cfg : configs) {
    CAPTURE(game_name(cfg.game));
    const int cells = cfg.game == GameKind::DotsAndBoxes ? action_space_size(cfg) : cfg.width * cfg.height;
    for (int game = 0; game < 10000; ++game) {
      GameState s = GameState::initial(cfg);
      int passes = 0;
      while (!s.is_terminal()) {
        const auto legal = legal_actions(s);
        REQUIRE(!legal.empty());
        const Action a = legal[rng() % legal.size()];
        if (cfg.game == GameKind::Othello && a == othello_pass(cfg)) ++passes;
        s = apply(s, a);
      }
      REQUIRE(s.move_count() <= cells + passes);
      REQUIRE(legal_actions(s).empty());
      REQUIRE(terminal_score(s, Player::P1) == -terminal_score(s, Player::P2));
      if (cfg.game == GameKind::DotsAndBoxes) {
        const auto owned = piece_counts(s);
        REQUIRE(owned[0] + owned[1] == cfg.width * cfg.height);
      }
    }
  }
}

TEST_CASE("connect4 4x4 k=3 game value: memoized minimax agrees with alpha-beta") {
  const GameState s = GameState::initial(GameConfig::connect4(4, 4, 3));
  oracle::Minimax solver;
  const double memo_value = solver.solve(s).value;
  CHECK(memo_value == alphabeta(s, -2.0, 2.0));
  // Every first move's value agrees too.
  for (Action a : legal_actions(s)) CHECK(solver.action_value(s, a) == -alphabeta(apply(s, a), -2.0, 2.0));
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(GameConfig::othello(5), std::invalid_argument);
  CHECK_THROWS_AS(GameConfig::dots_and_boxes(0, 2), std::invalid_argument);
  CHECK_THROWS_AS(GameConfig::connect4(20, 20, 4), std::invalid_argument);
  CHECK(parse_game_kind("othello") == GameKind::Othello);
  CHECK_THROWS_AS(parse_game_kind("chess"), std::invalid_argument);
}
