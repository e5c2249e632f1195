#include "rmcts/tiny_net.hpp"

#include "byte_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

namespace rmcts {

namespace {

constexpr char kMagic[8] = {'R', 'M', 'C', 'T', 'S', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

// Forward pass keeping intermediates for backprop.
struct Activations {
  Eigen::VectorXd hidden;
  double value_tanh = 0.0;
  Eigen::VectorXd policy;
  Eigen::VectorXd log_policy;
};

Activations forward(const ModelCheckpoint& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != net.arch.input) {
    throw std::invalid_argument("tiny_net: encoding has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(net.arch.input));
  }
  Activations a;
  a.hidden = (net.w1 * x + net.b1).array().tanh().matrix();
  a.value_tanh = std::tanh(net.wv.dot(a.hidden) + net.bv);
  const Eigen::VectorXd logits = net.wp * a.hidden + net.bp;
  const double shift = logits.maxCoeff();
  const double log_z = std::log((logits.array() - shift).exp().sum()) + shift;
  a.log_policy = (logits.array() - log_z).matrix();
  a.policy = a.log_policy.array().exp().matrix();
  return a;
}

template <typename Fn>
void for_each_block(const ModelCheckpoint& net, Fn&& fn) {
  // Row-major traversal of the weight matrices to match the file layout.
  for (Eigen::Index r = 0; r < net.w1.rows(); ++r)
    for (Eigen::Index c = 0; c < net.w1.cols(); ++c) fn(net.w1(r, c));
  for (Eigen::Index i = 0; i < net.b1.size(); ++i) fn(net.b1[i]);
  for (Eigen::Index i = 0; i < net.wv.size(); ++i) fn(net.wv[i]);
  fn(net.bv);
  for (Eigen::Index r = 0; r < net.wp.rows(); ++r)
    for (Eigen::Index c = 0; c < net.wp.cols(); ++c) fn(net.wp(r, c));
  for (Eigen::Index i = 0; i < net.bp.size(); ++i) fn(net.bp[i]);
}

template <typename Fn>
void for_each_block_mut(ModelCheckpoint& net, Fn&& fn) {
  for (Eigen::Index r = 0; r < net.w1.rows(); ++r)
    for (Eigen::Index c = 0; c < net.w1.cols(); ++c) fn(net.w1(r, c));
  for (Eigen::Index i = 0; i < net.b1.size(); ++i) fn(net.b1[i]);
  for (Eigen::Index i = 0; i < net.wv.size(); ++i) fn(net.wv[i]);
  fn(net.bv);
  for (Eigen::Index r = 0; r < net.wp.rows(); ++r)
    for (Eigen::Index c = 0; c < net.wp.cols(); ++c) fn(net.wp(r, c));
  for (Eigen::Index i = 0; i < net.bp.size(); ++i) fn(net.bp[i]);
}

}  // namespace

ModelCheckpoint ModelCheckpoint::zeros(const GameConfig& config, int hidden) {
  if (hidden < 1) throw std::invalid_argument("tiny_net: hidden width must be positive");
  ModelCheckpoint net;
  net.config = config;
  net.arch = {encoding_size(config), hidden, action_space_size(config)};
  net.w1 = Eigen::MatrixXd::Zero(hidden, net.arch.input);
  net.b1 = Eigen::VectorXd::Zero(hidden);
  net.wv = Eigen::VectorXd::Zero(hidden);
  net.wp = Eigen::MatrixXd::Zero(net.arch.actions, hidden);
  net.bp = Eigen::VectorXd::Zero(net.arch.actions);
  return net;
}

ModelCheckpoint ModelCheckpoint::random(const GameConfig& config, int hidden, std::uint64_t seed, double scale) {
  ModelCheckpoint net = zeros(config, hidden);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s1 = scale / std::sqrt(static_cast<double>(net.arch.input));
  const double s2 = scale / std::sqrt(static_cast<double>(hidden));
  net.w1 = net.w1.unaryExpr([&](double) { return s1 * normal(rng); });
  net.wv = net.wv.unaryExpr([&](double) { return s2 * normal(rng); });
  net.wp = net.wp.unaryExpr([&](double) { return s2 * normal(rng); });
  return net;
}

void ModelCheckpoint::validate() const {
  const auto h = arch.hidden;
  const auto d = arch.input;
  const auto a = arch.actions;
  if (h < 1 || d < 1 || a < 1) throw std::invalid_argument("tiny_net: architecture sizes must be positive");
  if (w1.rows() != h || w1.cols() != d || b1.size() != h || wv.size() != h || wp.rows() != a ||
      wp.cols() != h || bp.size() != a) {
    throw std::invalid_argument("tiny_net: weight shapes do not match the architecture");
  }
  if (d != encoding_size(config) || a != action_space_size(config))
    throw std::invalid_argument("tiny_net: architecture does not match the game configuration");
}

std::size_t ModelCheckpoint::parameter_count() const {
  const auto h = static_cast<std::size_t>(arch.hidden);
  return h * static_cast<std::size_t>(arch.input) + h + h + 1 + static_cast<std::size_t>(arch.actions) * (h + 1);
}

Eigen::VectorXd ModelCheckpoint::flat() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index i = 0;
  for_each_block(*this, [&](double v) { out[i++] = v; });
  return out;
}

void ModelCheckpoint::set_flat(const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (params.size() != static_cast<Eigen::Index>(parameter_count()))
    throw std::invalid_argument("tiny_net: flat parameter vector has the wrong length");
  Eigen::Index i = 0;
  for_each_block_mut(*this, [&](double& v) { v = params[i++]; });
}

bool operator==(const ModelCheckpoint& a, const ModelCheckpoint& b) {
  if (!(a.config == b.config) || !(a.arch == b.arch) || a.step != b.step) return false;
  const Eigen::VectorXd fa = a.flat();
  const Eigen::VectorXd fb = b.flat();
  return std::memcmp(fa.data(), fb.data(), sizeof(double) * static_cast<std::size_t>(fa.size())) == 0;
}

NetOutput tiny_net_forward(const ModelCheckpoint& net, const Eigen::Ref<const Eigen::VectorXd>& encoding) {
  Activations a = forward(net, encoding);
  return {max_score(net.config) * a.value_tanh, std::move(a.policy)};
}

TrainStats tiny_net_loss(const ModelCheckpoint& net, std::span<const ReplayExample> batch) {
  TrainStats stats;
  if (batch.empty()) return stats;
  const double scale = max_score(net.config);
  for (const ReplayExample& ex : batch) {
    const Activations a = forward(net, ex.encoding);
    const double dv = a.value_tanh - ex.target_value / scale;
    stats.value_loss += dv * dv;
    stats.policy_loss -= ex.target_policy.dot(a.log_policy);
  }
  const double n = static_cast<double>(batch.size());
  stats.value_loss /= n;
  stats.policy_loss /= n;
  stats.loss = stats.value_loss + stats.policy_loss;
  return stats;
}

Eigen::VectorXd tiny_net_gradient(const ModelCheckpoint& net, std::span<const ReplayExample> batch,
                                  TrainStats* stats_out) {
  ModelCheckpoint grad = ModelCheckpoint::zeros(net.config, net.arch.hidden);
  TrainStats stats;
  const double scale = max_score(net.config);
  for (const ReplayExample& ex : batch) {
    const Activations a = forward(net, ex.encoding);
    const double dv = a.value_tanh - ex.target_value / scale;
    stats.value_loss += dv * dv;
    stats.policy_loss -= ex.target_policy.dot(a.log_policy);

    const double d_value_pre = 2.0 * dv * (1.0 - a.value_tanh * a.value_tanh);
    const Eigen::VectorXd d_logits = a.policy * ex.target_policy.sum() - ex.target_policy;

    grad.wv += d_value_pre * a.hidden;
    grad.bv += d_value_pre;
    grad.wp += d_logits * a.hidden.transpose();
    grad.bp += d_logits;

    const Eigen::VectorXd d_hidden = d_value_pre * net.wv + net.wp.transpose() * d_logits;
    const Eigen::VectorXd d_pre = (d_hidden.array() * (1.0 - a.hidden.array().square())).matrix();
    grad.w1 += d_pre * ex.encoding.transpose();
    grad.b1 += d_pre;
  }
  const double n = static_cast<double>(batch.size());
  if (stats_out != nullptr) {
    stats.value_loss /= n;
    stats.policy_loss /= n;
    stats.loss = stats.value_loss + stats.policy_loss;
    *stats_out = stats;
  }
  return grad.flat() / n;
}

TrainStats tiny_net_train_step(ModelCheckpoint& net, std::span<const ReplayExample> batch, double learning_rate) {
  if (batch.empty()) throw std::invalid_argument("tiny_net: empty minibatch");
  TrainStats stats;
  const Eigen::VectorXd grad = tiny_net_gradient(net, batch, &stats);
  if (learning_rate != 0.0) net.set_flat(net.flat() - learning_rate * grad);
  ++net.step;
  return stats;
}

std::vector<std::uint8_t> checkpoint_to_bytes(const ModelCheckpoint& net) {
  net.validate();
  detail::ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(net.config.game));
  w.i32(net.config.width);
  w.i32(net.config.height);
  w.i32(net.config.connect_k);
  for (double p : net.config.arm_p) w.f64(p);
  w.u32(static_cast<std::uint32_t>(net.arch.input));
  w.u32(static_cast<std::uint32_t>(net.arch.hidden));
  w.u32(static_cast<std::uint32_t>(net.arch.actions));
  w.u64(net.step);
  for_each_block(net, [&](double v) { w.f64(v); });
  return w.take();
}

ModelCheckpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  const auto magic = r.raw(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("checkpoint: bad magic");
  if (const auto version = r.u32(); version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  ModelCheckpoint net;
  net.config.game = static_cast<GameKind>(r.u32());
  net.config.width = r.i32();
  net.config.height = r.i32();
  net.config.connect_k = r.i32();
  for (double& p : net.config.arm_p) p = r.f64();
  net.config.validate();
  const int input = static_cast<int>(r.u32());
  const int hidden = static_cast<int>(r.u32());
  const int actions = static_cast<int>(r.u32());
  ModelCheckpoint shaped = ModelCheckpoint::zeros(net.config, hidden);
  if (shaped.arch.input != input || shaped.arch.actions != actions)
    throw std::runtime_error("checkpoint: architecture does not match the game configuration");
  shaped.step = r.u64();
  for_each_block_mut(shaped, [&](double& v) { v = r.f64(); });
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return shaped;
}

void save_checkpoint(const ModelCheckpoint& net, const std::filesystem::path& path) {
  const auto bytes = checkpoint_to_bytes(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

nlohmann::json game_config_to_json(const GameConfig& c) {
  nlohmann::json j{{"game", game_name(c.game)}, {"width", c.width}, {"height", c.height}};
  if (c.game == GameKind::Connect4) j["connect_k"] = c.connect_k;
  if (c.game == GameKind::Bandit) j["arm_p"] = std::vector<double>(c.arm_p.begin(), c.arm_p.begin() + c.width);
  return j;
}

GameConfig game_config_from_json(const nlohmann::json& j) {
  const GameKind kind = parse_game_kind(j.at("game").get<std::string>());
  switch (kind) {
    case GameKind::Connect4:
      return GameConfig::connect4(j.value("width", 7), j.value("height", 6), j.value("connect_k", 4));
    case GameKind::Othello: return GameConfig::othello(j.value("width", 8));
    case GameKind::DotsAndBoxes: return GameConfig::dots_and_boxes(j.value("height", 2), j.value("width", 2));
    case GameKind::BinaryTree: return GameConfig::binary_tree();
    case GameKind::Bandit: {
      const auto p = j.value("arm_p", std::vector<double>{0.6, 0.4});
      return GameConfig::bandit(p);
    }
  }
  throw std::invalid_argument("unknown game");
}

nlohmann::json checkpoint_to_json(const ModelCheckpoint& net) {
  const auto matrix = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      auto& row = rows.emplace_back();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    }
    return rows;
  };
  const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {
      {"config", game_config_to_json(net.config)},
      {"architecture", {{"input", net.arch.input}, {"hidden", net.arch.hidden}, {"actions", net.arch.actions}}},
      {"step", net.step},
      {"w1", matrix(net.w1)},
      {"b1", vec(net.b1)},
      {"wv", vec(net.wv)},
      {"bv", net.bv},
      {"wp", matrix(net.wp)},
      {"bp", vec(net.bp)},
  };
}

}  // namespace rmcts
