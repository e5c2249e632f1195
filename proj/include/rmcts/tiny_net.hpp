#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "rmcts/games.hpp"

namespace rmcts {

/// One training target: encoded position, search posterior, final outcome.
struct ReplayExample {
  Eigen::VectorXd encoding;
  Eigen::VectorXd target_policy;
  double target_value = 0.0;  // game-score units, player-to-move perspective
};

struct NetArchitecture {
  int input = 0;
  int hidden = 0;
  int actions = 0;
  friend bool operator==(const NetArchitecture&, const NetArchitecture&) = default;
};

/// Single-hidden-layer network:
///   h = tanh(W1 x + b1)
///   value  = max_score * tanh(wv . h + bv)
///   policy = softmax(Wp h + bp)
struct ModelCheckpoint {
  GameConfig config;
  NetArchitecture arch;
  std::uint64_t step = 0;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::VectorXd wv;
  double bv = 0.0;
  Eigen::MatrixXd wp;  // actions x hidden
  Eigen::VectorXd bp;

  static ModelCheckpoint zeros(const GameConfig& config, int hidden);
  /// Weights drawn from N(0, scale^2 / fan_in), seeded.
  static ModelCheckpoint random(const GameConfig& config, int hidden, std::uint64_t seed, double scale = 1.0);

  /// Throws std::invalid_argument when weight shapes disagree with `arch`.
  void validate() const;
  std::size_t parameter_count() const;
  /// All weights flattened in file order (w1 row-major, b1, wv, bv, wp row-major, bp).
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::Ref<const Eigen::VectorXd>& params);

  friend bool operator==(const ModelCheckpoint& a, const ModelCheckpoint& b);
};

struct NetOutput {
  double value = 0.0;
  Eigen::VectorXd policy;  // softmax over the full action space, unmasked
};

struct TrainStats {
  double loss = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
};

/// Throws std::invalid_argument on an encoding of the wrong length.
NetOutput tiny_net_forward(const ModelCheckpoint& net, const Eigen::Ref<const Eigen::VectorXd>& encoding);

/// Mean over the batch of ((v - z) / max_score)^2 - sum target * log(policy).
TrainStats tiny_net_loss(const ModelCheckpoint& net, std::span<const ReplayExample> batch);

/// Gradient of tiny_net_loss with respect to flat(), by backpropagation.
Eigen::VectorXd tiny_net_gradient(const ModelCheckpoint& net, std::span<const ReplayExample> batch,
                                  TrainStats* stats = nullptr);

/// One SGD step in place. Returns the loss before the update. Throws on an empty batch.
TrainStats tiny_net_train_step(ModelCheckpoint& net, std::span<const ReplayExample> batch, double learning_rate);

// Checkpoint file: little-endian binary.
//   char[8]  "RMCTSNET"
//   u32      version (1)
//   u32      game kind, i32 width, i32 height, i32 connect_k, f64[8] arm_p
//   u32      input, u32 hidden, u32 actions
//   u64      training step
//   f64[]    w1 (row-major), b1, wv, bv, wp (row-major), bp
std::vector<std::uint8_t> checkpoint_to_bytes(const ModelCheckpoint& net);
ModelCheckpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelCheckpoint& net, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
nlohmann::json checkpoint_to_json(const ModelCheckpoint& net);

nlohmann::json game_config_to_json(const GameConfig& config);
GameConfig game_config_from_json(const nlohmann::json& j);

}  // namespace rmcts
