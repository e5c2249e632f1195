#include "rmcts/play_service.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "rmcts/tiny_net.hpp"

namespace rmcts {

namespace {

/// Carries an HTTP status out of request validation.
struct RequestError : std::runtime_error {
  RequestError(int status, const std::string& message) : std::runtime_error(message), status(status) {}
  int status;
};

constexpr int kNotFound = 404;
constexpr int kConflict = 409;
constexpr int kUnprocessable = 422;

std::string error_code(int status) {
  switch (status) {
    case kNotFound: return "not_found";
    case kConflict: return "conflict";
    case kUnprocessable: return "invalid_request";
    default: return "error";
  }
}

ServiceResponse error_response(int status, const std::string& message) {
  return {status, {{"error", {{"code", error_code(status)}, {"message", message}}}}};
}

/// An empty body reads as {}.
nlohmann::json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return nlohmann::json::object();
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw RequestError(kUnprocessable, "body is not valid JSON");
  if (!j.is_object()) throw RequestError(kUnprocessable, "body must be a JSON object");
  return j;
}

int player_number(Player p) { return p == Player::P1 ? 1 : 2; }

Player parse_player(const nlohmann::json& j, const char* field) {
  if (!j.is_number_integer() || (j.get<int>() != 1 && j.get<int>() != 2))
    throw RequestError(kUnprocessable, std::string(field) + " must be 1 or 2");
  return j.get<int>() == 1 ? Player::P1 : Player::P2;
}

GameConfig parse_game(const nlohmann::json& body) {
  const nlohmann::json game = body.value("game", nlohmann::json("connect4"));
  GameConfig config;
  if (game.is_string()) {
    config = game_config_from_json({{"game", game}});
  } else if (game.is_object()) {
    config = game_config_from_json(game);
  } else {
    throw RequestError(kUnprocessable, "game must be a name or an object");
  }
  config.validate();
  if (is_one_player(config)) throw RequestError(kUnprocessable, "game must have two players");
  return config;
}

/// Overrides the agent fields present in `j`.
AgentSpec parse_agent(const nlohmann::json& j, AgentSpec agent, int max_sims) {
  if (!j.is_object()) throw RequestError(kUnprocessable, "agent must be an object");
  if (j.contains("algorithm")) agent.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  if (j.contains("sims")) agent.n_sims = j.at("sims").get<int>();
  if (j.contains("c")) agent.c = j.at("c").get<double>();
  if (j.contains("evaluator")) agent.evaluator = j.at("evaluator").get<std::string>();
  const int min_sims = agent.algorithm == Algorithm::Ucb ? 2 : 1;
  if (agent.n_sims < min_sims || agent.n_sims > max_sims)
    throw RequestError(kUnprocessable, "sims must be in [" + std::to_string(min_sims) + ", " +
                                           std::to_string(max_sims) + "]");
  if (!(agent.c > 0.0)) throw RequestError(kUnprocessable, "c must be positive");
  return agent;
}

nlohmann::json agent_json(const AgentSpec& a) {
  return {{"algorithm", algorithm_name(a.algorithm)}, {"sims", a.n_sims}, {"c", a.c}, {"evaluator", a.evaluator}};
}

std::string session_id(std::uint64_t seed, std::uint64_t index) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix64(mix64(seed, 0x5E55), index)));
  return buf;
}

/// Runs `body` and maps request, game and JSON errors to their statuses.
template <typename Body>
ServiceResponse guarded(Body&& body) {
  try {
    return body();
  } catch (const RequestError& e) {
    return error_response(e.status, e.what());
  } catch (const IllegalAction& e) {
    return error_response(kConflict, e.what());
  } catch (const MoveParseError& e) {
    return error_response(kUnprocessable, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(kUnprocessable, e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(kUnprocessable, e.what());
  }
}

}  // namespace

nlohmann::json board_json(const GameState& s) {
  const GameConfig& cfg = s.config();
  const auto cells = s.cells();
  nlohmann::json j;
  j["kind"] = game_name(cfg.game);
  const auto grid = [&](int rows, int cols, auto index) {
    nlohmann::json g = nlohmann::json::array();
    for (int r = 0; r < rows; ++r) {
      std::vector<int> row;
      for (int c = 0; c < cols; ++c) row.push_back(cells[static_cast<std::size_t>(index(r, c))]);
      g.push_back(row);
    }
    return g;
  };
  switch (cfg.game) {
    case GameKind::Connect4:
      j["rows"] = cfg.height;
      j["cols"] = cfg.width;
      j["grid"] = grid(cfg.height, cfg.width, [&](int r, int c) { return (cfg.height - 1 - r) * cfg.width + c; });
      break;
    case GameKind::Othello:
      j["rows"] = cfg.height;
      j["cols"] = cfg.width;
      j["grid"] = grid(cfg.height, cfg.width, [&](int r, int c) { return r * cfg.width + c; });
      break;
    case GameKind::DotsAndBoxes: {
      const int rows = cfg.height;
      const int cols = cfg.width;
      const int h_edges = (rows + 1) * cols;
      const int edges = h_edges + rows * (cols + 1);
      j["rows"] = rows;
      j["cols"] = cols;
      j["horizontal"] = grid(rows + 1, cols, [&](int r, int c) { return r * cols + c; });
      j["vertical"] = grid(rows, cols + 1, [&](int r, int c) { return h_edges + r * (cols + 1) + c; });
      j["boxes"] = grid(rows, cols, [&](int r, int c) { return edges + r * cols + c; });
      break;
    }
    default:
      j["cells"] = std::vector<int>(cells.begin(), cells.end());
      break;
  }
  return j;
}

PlayService::PlayService(ServiceConfig config) : config_(std::move(config)) {}

std::size_t PlayService::session_count() const {
  const std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<PlayService::Session> PlayService::find(const std::string& id) const {
  const std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw RequestError(kNotFound, "no session '" + id + "'");
  return it->second;
}

std::shared_ptr<const Evaluator> PlayService::evaluator_for(const std::string& id, const GameConfig& game) {
  const std::string key = id + "|" + game_config_to_json(game).dump();
  const std::lock_guard lock(evaluators_mutex_);
  auto& slot = evaluators_[key];
  if (!slot) {
    try {
      slot = with_latency(make_evaluator(id, game), config_.latency);
    } catch (const std::exception& e) {
      evaluators_.erase(key);
      throw RequestError(kUnprocessable, e.what());
    }
  }
  return slot;
}

nlohmann::json PlayService::session_json(const Session& s) const {
  const GameConfig& cfg = s.state.config();
  nlohmann::json j;
  j["id"] = s.id;
  j["game"] = game_config_to_json(cfg);
  j["agent"] = agent_json(s.agent);
  j["human_player"] = s.human ? nlohmann::json(player_number(*s.human)) : nlohmann::json(nullptr);
  j["move_count"] = s.state.move_count();
  j["terminal"] = s.state.is_terminal();
  if (s.state.is_terminal()) {
    const double score = terminal_score(s.state, Player::P1);
    j["to_move"] = nullptr;
    j["score_p1"] = score;
    j["winner"] = score > 0 ? 1 : score < 0 ? 2 : 0;
  } else {
    j["to_move"] = player_number(s.state.to_move());
    j["score_p1"] = nullptr;
    j["winner"] = nullptr;
  }
  nlohmann::json moves = nlohmann::json::array();
  nlohmann::json actions = nlohmann::json::array();
  for (Action a : legal_actions(s.state)) {
    moves.push_back(format_move(cfg, a));
    actions.push_back(a);
  }
  j["legal_moves"] = moves;
  j["legal_actions"] = actions;
  j["board"] = board_json(s.state);
  j["board_text"] = render(s.state);
  nlohmann::json history = nlohmann::json::array();
  for (const MoveRecord& m : s.history) {
    history.push_back({{"player", player_number(m.player)},
                       {"move", format_move(cfg, m.action)},
                       {"action", m.action},
                       {"by", m.by_ai ? "ai" : "human"}});
  }
  j["history"] = history;
  return j;
}

ServiceResponse PlayService::create_session(const std::string& body) {
  return guarded([&] {
    const nlohmann::json req = parse_body(body);
    const GameConfig game = parse_game(req);
    const AgentSpec agent =
        parse_agent(req.value("agent", nlohmann::json::object()), config_.default_agent, config_.max_sims);
    auto session = std::make_shared<Session>();
    session->state = GameState::initial(game);
    session->agent = agent;
    session->evaluator = evaluator_for(agent.evaluator, game);
    if (req.contains("human_player") && !req.at("human_player").is_null())
      session->human = parse_player(req.at("human_player"), "human_player");

    const std::unique_lock lock(sessions_mutex_);
    const std::uint64_t index = next_session_++;
    session->id = session_id(config_.seed, index);
    session->seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : mix64(config_.seed, index);
    sessions_[session->id] = session;
    return ServiceResponse{201, session_json(*session)};
  });
}

ServiceResponse PlayService::get_session(const std::string& id) {
  return guarded([&] {
    const auto session = find(id);
    const std::lock_guard lock(session->mutex);
    return ServiceResponse{200, session_json(*session)};
  });
}

ServiceResponse PlayService::post_move(const std::string& id, const std::string& body) {
  return guarded([&] {
    const auto session = find(id);
    const nlohmann::json req = parse_body(body);
    const std::lock_guard lock(session->mutex);
    const GameState& s = session->state;
    const GameConfig& cfg = s.config();

    Action action = 0;
    if (req.contains("move")) {
      action = parse_move(cfg, req.at("move").get<std::string>());
    } else if (req.contains("action")) {
      if (!req.at("action").is_number_integer()) throw RequestError(kUnprocessable, "action must be an integer");
      action = req.at("action").get<int>();
      if (action < 0 || action >= action_space_size(cfg)) throw RequestError(kUnprocessable, "action out of range");
    } else {
      throw RequestError(kUnprocessable, "body needs 'move' or 'action'");
    }
    std::optional<Player> claimed;
    if (req.contains("player")) claimed = parse_player(req.at("player"), "player");

    if (s.is_terminal()) throw RequestError(kConflict, "game is over");
    if (session->human && s.to_move() != *session->human) throw RequestError(kConflict, "not the human's turn");
    if (claimed && *claimed != s.to_move()) throw RequestError(kConflict, "not that player's turn");
    if (!is_legal(s, action)) throw RequestError(kConflict, "illegal move '" + format_move(cfg, action) + "'");

    session->history.push_back({s.to_move(), action, false});
    session->state = apply(s, action);
    return ServiceResponse{200, session_json(*session)};
  });
}

ServiceResponse PlayService::ai_move(const std::string& id, const std::string& body) {
  return guarded([&] {
    const auto session = find(id);
    const nlohmann::json req = parse_body(body);
    const std::lock_guard lock(session->mutex);
    const GameState& s = session->state;
    if (s.is_terminal()) throw RequestError(kConflict, "game is over");
    if (session->human && s.to_move() == *session->human) throw RequestError(kConflict, "it is the human's turn");

    AgentSpec agent = parse_agent(req, session->agent, config_.max_sims);
    const auto evaluator = agent.evaluator == session->agent.evaluator ? session->evaluator
                                                                        : evaluator_for(agent.evaluator, s.config());
    SearchParams params;
    params.algorithm = agent.algorithm;
    params.n_sims = agent.n_sims;
    params.c = agent.c;
    params.seed = mix64(session->seed, static_cast<std::uint64_t>(s.move_count()));
    const auto start = std::chrono::steady_clock::now();
    const SearchResult r = search(s, params, *evaluator);
    const double wall_us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
    const Action action = best_action(r);
    const Eigen::VectorXd& pi = *r.policy;

    nlohmann::json out;
    out["move"] = format_move(s.config(), action);
    out["action"] = action;
    out["policy"] = std::vector<double>(pi.data(), pi.data() + pi.size());
    out["value"] = r.value;
    out["wall_time_us"] = wall_us;
    out["eval_calls"] = r.stats.eval_calls;
    out["agent"] = agent_json(agent);
    session->history.push_back({s.to_move(), action, true});
    session->state = apply(s, action);
    out["session"] = session_json(*session);
    return ServiceResponse{200, out};
  });
}

struct PlayServer::Impl {
  explicit Impl(ServiceConfig config) : service(std::move(config)) {
    const auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.create_session(req.body));
    });
    server.Get(R"(/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_session(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/moves)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.post_move(req.matches[1], req.body));
    });
    server.Post(R"(/sessions/([^/]+)/ai-move)", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.ai_move(req.matches[1], req.body));
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const ServiceResponse r = error_response(res.status, "no such route");
        res.set_content(r.body.dump(), "application/json");
      }
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string message = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        message = e.what();
      } catch (...) {
      }
      res.status = 500;
      res.set_content(error_response(500, message).body.dump(), "application/json");
    });
  }

  PlayService service;
  httplib::Server server;
  std::thread thread;
};

PlayServer::PlayServer(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

PlayServer::~PlayServer() { stop(); }

int PlayServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void PlayServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void PlayServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

PlayService& PlayServer::service() { return impl_->service; }

}  // namespace rmcts
