#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rmcts/rng.hpp"

namespace rmcts {

enum class Player : std::int8_t { P1 = 0, P2 = 1 };

constexpr Player opponent(Player p) { return p == Player::P1 ? Player::P2 : Player::P1; }

/// The two-player games plus two one-player toys (the six-node binary tree and
/// a multi-armed bandit) used for worked examples and bandit traces.
enum class GameKind : std::int8_t { Connect4, DotsAndBoxes, Othello, BinaryTree, Bandit };

using Action = int;

inline constexpr int kMaxCells = 128;
inline constexpr int kMaxArms = 8;

struct GameConfig {
  GameKind game = GameKind::Connect4;
  int width = 7;       // Connect-4 columns, Othello side, Dots-and-Boxes box columns, bandit arms
  int height = 6;      // Connect-4 rows, Othello side, Dots-and-Boxes box rows
  int connect_k = 4;
  std::array<double, kMaxArms> arm_p{};

  static GameConfig connect4(int width = 7, int height = 6, int k = 4);
  static GameConfig othello(int size = 8);
  static GameConfig dots_and_boxes(int rows = 2, int cols = 2);
  static GameConfig binary_tree();
  static GameConfig bandit(std::span<const double> payout_probability);

  /// Throws std::invalid_argument when sizes are out of range.
  void validate() const;

  friend bool operator==(const GameConfig&, const GameConfig&) = default;
};

struct IllegalAction : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MoveParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotTerminal : std::logic_error {
  using std::logic_error::logic_error;
};

int action_space_size(const GameConfig& config);
int encoding_size(const GameConfig& config);
/// Largest absolute terminal score the configuration can produce.
double max_score(const GameConfig& config);
bool is_one_player(const GameConfig& config);
/// Distinguished PASS action for Othello (one past the last cell).
Action othello_pass(const GameConfig& config);

std::string game_name(GameKind kind);
/// Accepts "connect4", "othello", "dots" / "dotsandboxes", "tree", "bandit".
GameKind parse_game_kind(std::string_view name);

/// Immutable position. Copying is cheap (fixed-size storage, no heap).
class GameState {
 public:
  static GameState initial(const GameConfig& config);

  const GameConfig& config() const { return config_; }
  Player to_move() const { return to_move_; }
  int move_count() const { return move_count_; }
  bool is_terminal() const { return terminal_; }
  /// Raw cell contents: 0 empty, 1 player one, 2 player two. Layout is per game
  /// (Dots-and-Boxes: edges first, then box owners).
  std::span<const std::int8_t> cells() const;

  friend bool operator==(const GameState&, const GameState&) = default;

 private:
  friend GameState apply(const GameState&, Action);
  friend double terminal_score(const GameState&, Player);

  GameConfig config_{};
  std::array<std::int8_t, kMaxCells> cells_{};
  Player to_move_ = Player::P1;
  std::int16_t move_count_ = 0;
  std::int8_t consecutive_passes_ = 0;
  bool terminal_ = false;
  double score_p1_ = 0.0;
};

std::vector<Action> legal_actions(const GameState& s);
bool is_legal(const GameState& s, Action a);
/// Throws IllegalAction when `a` is not legal in `s`.
GameState apply(const GameState& s, Action a);
inline bool is_terminal(const GameState& s) { return s.is_terminal(); }
/// Throws NotTerminal. Bandit arms report their expected payout here.
double terminal_score(const GameState& s, Player perspective);
/// Terminal score including chance: bandit arms pay +1 / -1 at random, every
/// other game returns terminal_score.
double sample_terminal_score(const GameState& s, Player perspective, Rng& rng);
bool has_chance_outcomes(const GameConfig& config);
/// +1 when the same player is to move in both states, otherwise -1.
int sgn_between(const GameState& s, const GameState& t);

/// Planes from the perspective of the player to move.
Eigen::VectorXd encode(const GameState& s);

/// Move notation: Connect-4 "4" (1-based column); Othello "d3" or "pass";
/// Dots-and-Boxes "h r c" / "v r c" (0-based); tree "l" / "r"; bandit "1".. (1-based arm).
Action parse_move(const GameConfig& config, std::string_view text);
std::string format_move(const GameConfig& config, Action a);
std::string render(const GameState& s);

/// Boxes owned by each player (Dots-and-Boxes) or discs on board (Othello).
std::array<int, 2> piece_counts(const GameState& s);

}  // namespace rmcts
