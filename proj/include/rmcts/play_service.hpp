#pragma once

// In-memory game sessions against a search agent, served over HTTP/JSON.
// Wire format: docs/play_service_api.md.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmcts/arena.hpp"
#include "rmcts/evaluator.hpp"
#include "rmcts/search.hpp"

namespace rmcts {

struct ServiceConfig {
  /// Agent used when a session does not name one.
  AgentSpec default_agent{Algorithm::Rmcts, 256, 1.0, "heuristic"};
  LatencyModel latency;
  std::uint64_t seed = 0;
  /// Largest simulation budget a request may ask for.
  int max_sims = 1 << 16;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Request handling without the transport. Safe to call from many threads;
/// requests touching the same session run one at a time.
class PlayService {
 public:
  explicit PlayService(ServiceConfig config = {});

  ServiceResponse create_session(const std::string& body);
  ServiceResponse get_session(const std::string& id);
  ServiceResponse post_move(const std::string& id, const std::string& body);
  ServiceResponse ai_move(const std::string& id, const std::string& body);

  std::size_t session_count() const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct MoveRecord {
    Player player;
    Action action;
    bool by_ai;
  };
  struct Session {
    std::string id;
    std::mutex mutex;
    GameState state;
    AgentSpec agent;
    std::shared_ptr<const Evaluator> evaluator;
    std::optional<Player> human;  // absent: either side may move by hand
    std::uint64_t seed = 0;
    std::vector<MoveRecord> history;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json session_json(const Session& s) const;
  std::shared_ptr<const Evaluator> evaluator_for(const std::string& id, const GameConfig& game);

  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 0;
  std::mutex evaluators_mutex_;
  std::map<std::string, std::shared_ptr<const Evaluator>> evaluators_;
};

/// Structured board: {"kind", "rows", "cols", ...} with cell grids of 0 (empty),
/// 1 or 2. Connect-4 and Othello carry "grid" (row 0 is the top row as
/// rendered); Dots-and-Boxes carries "horizontal", "vertical" and "boxes".
nlohmann::json board_json(const GameState& s);

/// HTTP front end for a PlayService.
class PlayServer {
 public:
  explicit PlayServer(ServiceConfig config = {});
  ~PlayServer();
  PlayServer(const PlayServer&) = delete;
  PlayServer& operator=(const PlayServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port. Throws std::runtime_error when binding fails.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);
  void stop();

  PlayService& service();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rmcts
