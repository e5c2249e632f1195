#include "rmcts/games.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace rmcts {

namespace {

constexpr std::int8_t kEmpty = 0;

std::int8_t piece(Player p) { return p == Player::P1 ? 1 : 2; }

// Binary tree toy: node ids and the rewards of its three leaves.
enum TreeNode : std::int8_t { kTreeRoot = 0, kTreeInner = 1, kLeafL = 2, kLeafRL = 3, kLeafRR = 4 };

double tree_leaf_value(std::int8_t node) {
  switch (node) {
    case kLeafL: return 1.0;
    case kLeafRL: return -3.0;
    case kLeafRR: return 2.0;
    default: return 0.0;
  }
}

// Dots-and-Boxes edge layout for R rows x C cols of boxes:
// horizontal h(r,c), r in [0,R], c in [0,C)   -> r*C + c
// vertical   v(r,c), r in [0,R), c in [0,C]   -> (R+1)*C + r*(C+1) + c
struct DotsLayout {
  int rows, cols;
  int h_edges() const { return (rows + 1) * cols; }
  int edges() const { return h_edges() + rows * (cols + 1); }
  int boxes() const { return rows * cols; }
  int h(int r, int c) const { return r * cols + c; }
  int v(int r, int c) const { return h_edges() + r * (cols + 1) + c; }
  std::array<int, 4> box_edges(int r, int c) const { return {h(r, c), h(r + 1, c), v(r, c), v(r, c + 1)}; }
};

DotsLayout dots_layout(const GameConfig& c) { return {c.height, c.width}; }

constexpr std::array<std::array<int, 2>, 8> kDirections{{{1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                                         {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

int othello_flips_in_direction(const GameConfig& cfg, std::span<const std::int8_t> cells, int row,
                               int col, int dr, int dc, std::int8_t me) {
  const std::int8_t them = me == 1 ? 2 : 1;
  int r = row + dr;
  int c = col + dc;
  int count = 0;
  while (r >= 0 && r < cfg.height && c >= 0 && c < cfg.width && cells[r * cfg.width + c] == them) {
    r += dr;
    c += dc;
    ++count;
  }
  if (count == 0 || r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) return 0;
  return cells[r * cfg.width + c] == me ? count : 0;
}

bool othello_placement_legal(const GameConfig& cfg, std::span<const std::int8_t> cells, int cell,
                             std::int8_t me) {
  if (cells[cell] != kEmpty) return false;
  const int row = cell / cfg.width;
  const int col = cell % cfg.width;
  for (const auto& [dr, dc] : kDirections) {
    if (othello_flips_in_direction(cfg, cells, row, col, dr, dc, me) > 0) return true;
  }
  return false;
}

bool connect4_wins_at(const GameConfig& cfg, std::span<const std::int8_t> cells, int row, int col) {
  const std::int8_t who = cells[row * cfg.width + col];
  constexpr std::array<std::array<int, 2>, 4> kLines{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
  for (const auto& [dr, dc] : kLines) {
    int run = 1;
    for (int sign : {1, -1}) {
      int r = row + sign * dr;
      int c = col + sign * dc;
      while (r >= 0 && r < cfg.height && c >= 0 && c < cfg.width && cells[r * cfg.width + c] == who) {
        ++run;
        r += sign * dr;
        c += sign * dc;
      }
    }
    if (run >= cfg.connect_k) return true;
  }
  return false;
}

int parse_int(std::string_view text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw MoveParseError("not an integer: '" + std::string(text) + "'");
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return out;
}

}  // namespace

GameConfig GameConfig::connect4(int width, int height, int k) {
  GameConfig c;
  c.game = GameKind::Connect4;
  c.width = width;
  c.height = height;
  c.connect_k = k;
  c.validate();
  return c;
}

GameConfig GameConfig::othello(int size) {
  GameConfig c;
  c.game = GameKind::Othello;
  c.width = size;
  c.height = size;
  c.connect_k = 0;
  c.validate();
  return c;
}

GameConfig GameConfig::dots_and_boxes(int rows, int cols) {
  GameConfig c;
  c.game = GameKind::DotsAndBoxes;
  c.width = cols;
  c.height = rows;
  c.connect_k = 0;
  c.validate();
  return c;
}

GameConfig GameConfig::binary_tree() {
  GameConfig c;
  c.game = GameKind::BinaryTree;
  c.width = 2;
  c.height = 1;
  c.connect_k = 0;
  return c;
}

GameConfig GameConfig::bandit(std::span<const double> payout_probability) {
  GameConfig c;
  c.game = GameKind::Bandit;
  c.width = static_cast<int>(payout_probability.size());
  c.height = 1;
  c.connect_k = 0;
  std::copy(payout_probability.begin(),
            payout_probability.begin() + std::min<std::size_t>(payout_probability.size(), kMaxArms),
            c.arm_p.begin());
  c.validate();
  return c;
}

void GameConfig::validate() const {
  switch (game) {
    case GameKind::Connect4:
      if (width < 1 || height < 1 || width * height > kMaxCells)
        throw std::invalid_argument("connect4: board must be between 1 and 128 cells");
      if (connect_k < 2 || (connect_k > width && connect_k > height))
        throw std::invalid_argument("connect4: k must be >= 2 and fit on the board");
      break;
    case GameKind::Othello:
      if (width != height || width < 4 || width % 2 != 0 || width * height > kMaxCells)
        throw std::invalid_argument("othello: board must be square with an even side in [4, 10]");
      break;
    case GameKind::DotsAndBoxes: {
      if (width < 1 || height < 1) throw std::invalid_argument("dots: box grid must be at least 1x1");
      const DotsLayout layout = dots_layout(*this);
      if (layout.edges() + layout.boxes() > kMaxCells)
        throw std::invalid_argument("dots: box grid too large");
      break;
    }
    case GameKind::BinaryTree:
      break;
    case GameKind::Bandit:
      if (width < 1 || width > kMaxArms) throw std::invalid_argument("bandit: between 1 and 8 arms");
      for (int i = 0; i < width; ++i) {
        if (!(arm_p[i] >= 0.0 && arm_p[i] <= 1.0))
          throw std::invalid_argument("bandit: payout probabilities must lie in [0, 1]");
      }
      break;
  }
}

int action_space_size(const GameConfig& c) {
  switch (c.game) {
    case GameKind::Connect4: return c.width;
    case GameKind::Othello: return c.width * c.height + 1;
    case GameKind::DotsAndBoxes: return dots_layout(c).edges();
    case GameKind::BinaryTree: return 2;
    case GameKind::Bandit: return c.width;
  }
  return 0;
}

int encoding_size(const GameConfig& c) {
  switch (c.game) {
    case GameKind::Connect4:
    case GameKind::Othello: return 2 * c.width * c.height;
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(c);
      return layout.edges() + 2 * layout.boxes();
    }
    case GameKind::BinaryTree: return 5;
    case GameKind::Bandit: return c.width + 1;
  }
  return 0;
}

double max_score(const GameConfig& c) {
  switch (c.game) {
    case GameKind::Connect4: return 1.0;
    case GameKind::Othello: return static_cast<double>(c.width * c.height);
    case GameKind::DotsAndBoxes: return static_cast<double>(c.width * c.height);
    case GameKind::BinaryTree: return 3.0;
    case GameKind::Bandit: return 1.0;
  }
  return 1.0;
}

bool is_one_player(const GameConfig& c) {
  return c.game == GameKind::BinaryTree || c.game == GameKind::Bandit;
}

bool has_chance_outcomes(const GameConfig& c) { return c.game == GameKind::Bandit; }

Action othello_pass(const GameConfig& c) { return c.width * c.height; }

std::string game_name(GameKind kind) {
  switch (kind) {
    case GameKind::Connect4: return "connect4";
    case GameKind::DotsAndBoxes: return "dots";
    case GameKind::Othello: return "othello";
    case GameKind::BinaryTree: return "tree";
    case GameKind::Bandit: return "bandit";
  }
  return "?";
}

GameKind parse_game_kind(std::string_view name) {
  const std::string n = lower(name);
  if (n == "connect4" || n == "connect-4" || n == "c4") return GameKind::Connect4;
  if (n == "othello" || n == "reversi") return GameKind::Othello;
  if (n == "dots" || n == "dotsandboxes" || n == "dots-and-boxes") return GameKind::DotsAndBoxes;
  if (n == "tree") return GameKind::BinaryTree;
  if (n == "bandit") return GameKind::Bandit;
  throw std::invalid_argument("unknown game '" + std::string(name) + "'");
}

GameState GameState::initial(const GameConfig& config) {
  config.validate();
  GameState s;
  s.config_ = config;
  if (config.game == GameKind::Othello) {
    const int w = config.width;
    const int mid = w / 2;
    // d4/e5 white (P2), e4/d5 black (P1) on 8x8; rank 1 is row 0.
    s.cells_[(mid - 1) * w + (mid - 1)] = 2;
    s.cells_[mid * w + mid] = 2;
    s.cells_[(mid - 1) * w + mid] = 1;
    s.cells_[mid * w + (mid - 1)] = 1;
  }
  return s;
}

std::span<const std::int8_t> GameState::cells() const {
  std::size_t n = 0;
  switch (config_.game) {
    case GameKind::Connect4:
    case GameKind::Othello: n = static_cast<std::size_t>(config_.width * config_.height); break;
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(config_);
      n = static_cast<std::size_t>(layout.edges() + layout.boxes());
      break;
    }
    case GameKind::BinaryTree:
    case GameKind::Bandit: n = 1; break;
  }
  return {cells_.data(), n};
}

std::vector<Action> legal_actions(const GameState& s) {
  std::vector<Action> out;
  if (s.is_terminal()) return out;
  const GameConfig& cfg = s.config();
  const auto cells = s.cells();
  switch (cfg.game) {
    case GameKind::Connect4:
      for (int col = 0; col < cfg.width; ++col) {
        if (cells[(cfg.height - 1) * cfg.width + col] == kEmpty) out.push_back(col);
      }
      break;
    case GameKind::Othello: {
      const std::int8_t me = piece(s.to_move());
      for (int cell = 0; cell < cfg.width * cfg.height; ++cell) {
        if (othello_placement_legal(cfg, cells, cell, me)) out.push_back(cell);
      }
      if (out.empty()) out.push_back(othello_pass(cfg));
      break;
    }
    case GameKind::DotsAndBoxes: {
      const int edges = dots_layout(cfg).edges();
      for (int e = 0; e < edges; ++e) {
        if (cells[e] == kEmpty) out.push_back(e);
      }
      break;
    }
    case GameKind::BinaryTree:
      out = {0, 1};
      break;
    case GameKind::Bandit:
      for (int arm = 0; arm < cfg.width; ++arm) out.push_back(arm);
      break;
  }
  return out;
}

bool is_legal(const GameState& s, Action a) {
  if (s.is_terminal() || a < 0 || a >= action_space_size(s.config())) return false;
  const GameConfig& cfg = s.config();
  const auto cells = s.cells();
  switch (cfg.game) {
    case GameKind::Connect4: return cells[(cfg.height - 1) * cfg.width + a] == kEmpty;
    case GameKind::Othello: {
      const std::int8_t me = piece(s.to_move());
      if (a == othello_pass(cfg)) {
        for (int cell = 0; cell < cfg.width * cfg.height; ++cell) {
          if (othello_placement_legal(cfg, cells, cell, me)) return false;
        }
        return true;
      }
      return othello_placement_legal(cfg, cells, a, me);
    }
    case GameKind::DotsAndBoxes: return cells[a] == kEmpty;
    case GameKind::BinaryTree:
    case GameKind::Bandit: return true;
  }
  return false;
}

GameState apply(const GameState& s, Action a) {
  if (!is_legal(s, a)) {
    throw IllegalAction("illegal action " + std::to_string(a) + " in " + game_name(s.config().game));
  }
  GameState t = s;
  const GameConfig& cfg = s.config();
  const Player mover = s.to_move();
  const std::int8_t me = piece(mover);
  t.move_count_ = static_cast<std::int16_t>(s.move_count_ + 1);

  switch (cfg.game) {
    case GameKind::Connect4: {
      int row = 0;
      while (t.cells_[row * cfg.width + a] != kEmpty) ++row;
      t.cells_[row * cfg.width + a] = me;
      t.to_move_ = opponent(mover);
      if (connect4_wins_at(cfg, t.cells(), row, a)) {
        t.terminal_ = true;
        t.score_p1_ = mover == Player::P1 ? 1.0 : -1.0;
      } else if (t.move_count_ >= cfg.width * cfg.height) {
        t.terminal_ = true;
        t.score_p1_ = 0.0;
      }
      break;
    }
    case GameKind::Othello: {
      const int n_cells = cfg.width * cfg.height;
      t.to_move_ = opponent(mover);
      if (a == othello_pass(cfg)) {
        t.consecutive_passes_ = static_cast<std::int8_t>(s.consecutive_passes_ + 1);
      } else {
        t.consecutive_passes_ = 0;
        const int row = a / cfg.width;
        const int col = a % cfg.width;
        for (const auto& [dr, dc] : kDirections) {
          const int n = othello_flips_in_direction(cfg, s.cells(), row, col, dr, dc, me);
          for (int k = 1; k <= n; ++k) t.cells_[(row + k * dr) * cfg.width + (col + k * dc)] = me;
        }
        t.cells_[a] = me;
      }
      const bool full = std::none_of(t.cells_.begin(), t.cells_.begin() + n_cells,
                                     [](std::int8_t c) { return c == kEmpty; });
      if (full || t.consecutive_passes_ >= 2) {
        t.terminal_ = true;
        const auto counts = piece_counts(t);
        t.score_p1_ = static_cast<double>(counts[0] - counts[1]);
      }
      break;
    }
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(cfg);
      t.cells_[a] = 1;
      bool completed = false;
      for (int r = 0; r < layout.rows; ++r) {
        for (int c = 0; c < layout.cols; ++c) {
          const int box = layout.edges() + r * layout.cols + c;
          if (t.cells_[box] != kEmpty) continue;
          const auto edges = layout.box_edges(r, c);
          if (std::find(edges.begin(), edges.end(), a) == edges.end()) continue;
          if (std::all_of(edges.begin(), edges.end(), [&](int e) { return t.cells_[e] != kEmpty; })) {
            t.cells_[box] = me;
            completed = true;
          }
        }
      }
      t.to_move_ = completed ? mover : opponent(mover);
      if (t.move_count_ >= layout.edges()) {
        t.terminal_ = true;
        const auto counts = piece_counts(t);
        t.score_p1_ = static_cast<double>(counts[0] - counts[1]);
      }
      break;
    }
    case GameKind::BinaryTree: {
      const std::int8_t node = s.cells_[0];
      const std::int8_t next = node == kTreeRoot ? (a == 0 ? kLeafL : kTreeInner) : (a == 0 ? kLeafRL : kLeafRR);
      t.cells_[0] = next;
      if (next != kTreeInner) {
        t.terminal_ = true;
        t.score_p1_ = tree_leaf_value(next);
      }
      break;
    }
    case GameKind::Bandit:
      t.cells_[0] = static_cast<std::int8_t>(a + 1);
      t.terminal_ = true;
      t.score_p1_ = 2.0 * cfg.arm_p[a] - 1.0;
      break;
  }
  return t;
}

double terminal_score(const GameState& s, Player perspective) {
  if (!s.is_terminal()) throw NotTerminal("terminal_score queried on a nonterminal state");
  return perspective == Player::P1 ? s.score_p1_ : -s.score_p1_;
}

double sample_terminal_score(const GameState& s, Player perspective, Rng& rng) {
  if (s.config().game != GameKind::Bandit) return terminal_score(s, perspective);
  if (!s.is_terminal()) throw NotTerminal("terminal_score queried on a nonterminal state");
  const double p = s.config().arm_p[s.cells()[0] - 1];
  const double payout = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1.0 : -1.0;
  return perspective == Player::P1 ? payout : -payout;
}

int sgn_between(const GameState& s, const GameState& t) { return s.to_move() == t.to_move() ? 1 : -1; }

std::array<int, 2> piece_counts(const GameState& s) {
  std::array<int, 2> counts{0, 0};
  const GameConfig& cfg = s.config();
  std::span<const std::int8_t> region = s.cells();
  if (cfg.game == GameKind::DotsAndBoxes) region = region.subspan(dots_layout(cfg).edges());
  if (cfg.game == GameKind::BinaryTree || cfg.game == GameKind::Bandit) return counts;
  for (std::int8_t c : region) {
    if (c == 1) ++counts[0];
    if (c == 2) ++counts[1];
  }
  return counts;
}

Eigen::VectorXd encode(const GameState& s) {
  const GameConfig& cfg = s.config();
  Eigen::VectorXd planes = Eigen::VectorXd::Zero(encoding_size(cfg));
  const auto cells = s.cells();
  const std::int8_t me = piece(s.to_move());
  switch (cfg.game) {
    case GameKind::Connect4:
    case GameKind::Othello: {
      const int n = cfg.width * cfg.height;
      for (int i = 0; i < n; ++i) {
        if (cells[i] == kEmpty) continue;
        planes[cells[i] == me ? i : n + i] = 1.0;
      }
      break;
    }
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(cfg);
      const int edges = layout.edges();
      const int boxes = layout.boxes();
      for (int e = 0; e < edges; ++e) planes[e] = cells[e] != kEmpty ? 1.0 : 0.0;
      for (int b = 0; b < boxes; ++b) {
        const std::int8_t owner = cells[edges + b];
        if (owner == kEmpty) continue;
        planes[edges + (owner == me ? b : boxes + b)] = 1.0;
      }
      break;
    }
    case GameKind::BinaryTree:
    case GameKind::Bandit:
      planes[cells[0]] = 1.0;
      break;
  }
  return planes;
}

Action parse_move(const GameConfig& cfg, std::string_view raw) {
  const std::string text = lower(trim(raw));
  if (text.empty()) throw MoveParseError("empty move");
  switch (cfg.game) {
    case GameKind::Connect4: {
      const int col = parse_int(text);
      if (col < 1 || col > cfg.width) throw MoveParseError("column out of range: " + text);
      return col - 1;
    }
    case GameKind::Othello: {
      if (text == "pass") return othello_pass(cfg);
      const int file = text[0] - 'a';
      if (file < 0 || file >= cfg.width) throw MoveParseError("bad file in '" + text + "'");
      const int rank = parse_int(std::string_view(text).substr(1));
      if (rank < 1 || rank > cfg.height) throw MoveParseError("bad rank in '" + text + "'");
      return (rank - 1) * cfg.width + file;
    }
    case GameKind::DotsAndBoxes: {
      std::istringstream in(text);
      std::string kind, r_text, c_text, extra;
      if (!(in >> kind >> r_text >> c_text) || (in >> extra))
        throw MoveParseError("expected 'h r c' or 'v r c', got '" + text + "'");
      const int r = parse_int(r_text);
      const int c = parse_int(c_text);
      const DotsLayout layout = dots_layout(cfg);
      if (kind == "h") {
        if (r < 0 || r > layout.rows || c < 0 || c >= layout.cols) throw MoveParseError("edge out of range");
        return layout.h(r, c);
      }
      if (kind == "v") {
        if (r < 0 || r >= layout.rows || c < 0 || c > layout.cols) throw MoveParseError("edge out of range");
        return layout.v(r, c);
      }
      throw MoveParseError("edge kind must be 'h' or 'v'");
    }
    case GameKind::BinaryTree:
      if (text == "l") return 0;
      if (text == "r") return 1;
      throw MoveParseError("expected 'l' or 'r'");
    case GameKind::Bandit: {
      const int arm = parse_int(text);
      if (arm < 1 || arm > cfg.width) throw MoveParseError("arm out of range");
      return arm - 1;
    }
  }
  throw MoveParseError("unsupported game");
}

std::string format_move(const GameConfig& cfg, Action a) {
  switch (cfg.game) {
    case GameKind::Connect4: return std::to_string(a + 1);
    case GameKind::Othello:
      if (a == othello_pass(cfg)) return "pass";
      return std::string(1, static_cast<char>('a' + a % cfg.width)) + std::to_string(a / cfg.width + 1);
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(cfg);
      if (a < layout.h_edges()) return "h " + std::to_string(a / layout.cols) + " " + std::to_string(a % layout.cols);
      const int rel = a - layout.h_edges();
      return "v " + std::to_string(rel / (layout.cols + 1)) + " " + std::to_string(rel % (layout.cols + 1));
    }
    case GameKind::BinaryTree: return a == 0 ? "l" : "r";
    case GameKind::Bandit: return std::to_string(a + 1);
  }
  return "?";
}

std::string render(const GameState& s) {
  const GameConfig& cfg = s.config();
  const auto cells = s.cells();
  std::ostringstream out;
  const auto glyph = [](std::int8_t c) { return c == 1 ? 'X' : c == 2 ? 'O' : '.'; };
  switch (cfg.game) {
    case GameKind::Connect4:
      for (int row = cfg.height - 1; row >= 0; --row) {
        for (int col = 0; col < cfg.width; ++col) out << ' ' << glyph(cells[row * cfg.width + col]);
        out << '\n';
      }
      for (int col = 0; col < cfg.width; ++col) out << ' ' << (col + 1) % 10;
      out << '\n';
      break;
    case GameKind::Othello:
      out << "  ";
      for (int col = 0; col < cfg.width; ++col) out << ' ' << static_cast<char>('a' + col);
      out << '\n';
      for (int row = 0; row < cfg.height; ++row) {
        out << (row + 1 < 10 ? " " : "") << row + 1;
        for (int col = 0; col < cfg.width; ++col) out << ' ' << glyph(cells[row * cfg.width + col]);
        out << '\n';
      }
      break;
    case GameKind::DotsAndBoxes: {
      const DotsLayout layout = dots_layout(cfg);
      for (int r = 0; r <= layout.rows; ++r) {
        for (int c = 0; c < layout.cols; ++c) out << '+' << (cells[layout.h(r, c)] ? "---" : "   ");
        out << "+\n";
        if (r == layout.rows) break;
        for (int c = 0; c <= layout.cols; ++c) {
          out << (cells[layout.v(r, c)] ? '|' : ' ');
          if (c < layout.cols) {
            const std::int8_t owner = cells[layout.edges() + r * layout.cols + c];
            out << ' ' << (owner == 1 ? '1' : owner == 2 ? '2' : ' ') << ' ';
          }
        }
        out << '\n';
      }
      break;
    }
    case GameKind::BinaryTree: {
      static constexpr std::array<const char*, 5> kNames{"s", "t", "leaf(1)", "leaf(-3)", "leaf(2)"};
      out << "node " << kNames[cells[0]] << '\n';
      break;
    }
    case GameKind::Bandit:
      out << (cells[0] == 0 ? std::string("bandit: choose an arm") : "bandit: pulled arm " + std::to_string(cells[0]))
          << '\n';
      break;
  }
  if (!is_one_player(cfg)) {
    if (s.is_terminal()) {
      out << "game over, score (P1) " << terminal_score(s, Player::P1) << '\n';
    } else {
      out << (s.to_move() == Player::P1 ? "X" : "O") << " to move\n";
    }
  }
  return out.str();
}

}  // namespace rmcts
