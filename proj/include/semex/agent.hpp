#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semex/action.hpp"
#include "semex/errors.hpp"
#include "semex/nn.hpp"
#include "semex/rng.hpp"

namespace semex {

using ActionVector = std::array<double, kNumActions>;

/// Non-depth part of the agent input.
struct StateContext {
  int query_streak = 0;
  std::array<int, 3> objects_by_sector{};  // visible objects left of, along and right of the view axis
  int seen_classes = 0;                    // distinct classes detected so far this episode
};

/// Agent input: the depth rays, then streak, three sector counts and the
/// seen-class count, each scaled into [0, 1] with saturation.
inline constexpr int kContextFeatures = 5;
inline constexpr int kStreakSaturation = 3;
inline constexpr int kSectorSaturation = 4;
inline constexpr int kClassSaturation = 10;

inline Eigen::VectorXd encode_state(std::span<const double> depth, const StateContext& ctx) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(depth.size()) + kContextFeatures);
  for (std::size_t i = 0; i < depth.size(); ++i) s(static_cast<Eigen::Index>(i)) = depth[i];
  const auto scaled = [](int v, int cap) { return static_cast<double>(std::clamp(v, 0, cap)) / cap; };
  Eigen::Index k = static_cast<Eigen::Index>(depth.size());
  s(k++) = scaled(ctx.query_streak, kStreakSaturation);
  for (int n : ctx.objects_by_sector) s(k++) = scaled(n, kSectorSaturation);
  s(k) = scaled(ctx.seen_classes, kClassSaturation);
  return s;
}

struct AgentConfig {
  int state_size = 128 + kContextFeatures;
  std::vector<int> actor_hidden{256, 128};
  std::vector<int> critic_hidden{256, 128};
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  std::optional<double> grad_clip = 10.0;
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 64;
  std::size_t warmup_steps = 1000;
  double noise_sigma_start = 0.2;
  double noise_sigma_end = 0.05;
  double actor_final_scale = 0.1;
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double action_reg = 0.0;         // L2 weight on the actor's pre-tanh outputs

  void validate() const {
    if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("optimizer must be \"sgd\" or \"adam\"");
    if (state_size < 1) throw ConfigError("state_size must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
    if (!(actor_lr >= 0.0 && critic_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
    if (buffer_capacity < 1 || batch_size < 1) throw ConfigError("buffer_capacity and batch_size must be >= 1");
    if (!(noise_sigma_start >= 0.0 && noise_sigma_end >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be > 0");
    if (!(action_reg >= 0.0)) throw ConfigError("action_reg must be >= 0");
  }
};

struct Transition {
  Eigen::VectorXd state;
  ActionVector action{};
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

/// Column-stacked minibatch.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;
  Eigen::VectorXd continues;  // 1 - terminal

  Eigen::Index size() const { return rewards.size(); }
};

inline Batch make_batch(std::span<const Transition> items) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  const auto n = static_cast<Eigen::Index>(items.size());
  const auto s = items.front().state.size();
  Batch b;
  b.states.resize(s, n);
  b.next_states.resize(s, n);
  b.actions.resize(kNumActions, n);
  b.rewards.resize(n);
  b.continues.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = items[static_cast<std::size_t>(i)];
    b.states.col(i) = t.state;
    b.next_states.col(i) = t.next_state;
    for (int a = 0; a < kNumActions; ++a) b.actions(a, i) = t.action[static_cast<std::size_t>(a)];
    b.rewards(i) = t.reward;
    b.continues(i) = t.terminal ? 0.0 : 1.0;
  }
  return b;
}

/// Fixed-capacity ring; once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be >= 1");
  }

  void push(Transition t) {
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(t));
    } else {
      slots_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return slots_.empty(); }
  const Transition& at(std::size_t i) const { return slots_.at(i); }

  void clear() {
    slots_.clear();
    cursor_ = 0;
  }

  std::size_t cursor() const { return cursor_; }

  /// Rebuilds a buffer from stored slots and write cursor.
  static ReplayBuffer restore(std::size_t capacity, std::vector<Transition> slots, std::size_t cursor) {
    ReplayBuffer b(capacity);
    if (slots.size() > capacity || cursor >= capacity || (slots.size() < capacity && cursor != slots.size() % capacity))
      throw std::invalid_argument("inconsistent replay buffer contents");
    b.slots_ = std::move(slots);
    b.cursor_ = cursor;
    return b;
  }

  /// Uniform with replacement over filled slots.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t batch_size) const {
    if (slots_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
    if (batch_size > slots_.size()) throw std::invalid_argument("batch larger than replay contents");
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, slots_.size()));
    return idx;
  }

  Batch sample(Rng& rng, std::size_t batch_size) const {
    std::vector<Transition> picked;
    picked.reserve(batch_size);
    for (auto i : sample_indices(rng, batch_size)) picked.push_back(slots_[i]);
    return make_batch(picked);
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> slots_;
};

/// Actor, critic, their targets and the replay memory.
struct DdpgAgent {
  AgentConfig config;
  nn::Mlp actor;
  nn::Mlp critic;
  nn::Mlp target_actor;
  nn::Mlp target_critic;
  ReplayBuffer buffer;
  double noise_sigma = 0.2;
  nn::AdamState actor_opt;  // used when config.optimizer == "adam"
  nn::AdamState critic_opt;

  DdpgAgent() = default;

  DdpgAgent(AgentConfig cfg, std::uint64_t init_seed)
      : config(std::move(cfg)), buffer(config.buffer_capacity), noise_sigma(config.noise_sigma_start) {
    config.validate();
    Rng rng(init_seed);
    std::vector<int> a_dims{config.state_size};
    a_dims.insert(a_dims.end(), config.actor_hidden.begin(), config.actor_hidden.end());
    a_dims.push_back(kNumActions);
    std::vector<int> c_dims{config.state_size + kNumActions};
    c_dims.insert(c_dims.end(), config.critic_hidden.begin(), config.critic_hidden.end());
    c_dims.push_back(1);
    actor = nn::Mlp::initialized(a_dims, nn::Activation::Tanh, rng, config.actor_final_scale);
    critic = nn::Mlp::initialized(c_dims, nn::Activation::Identity, rng);
    target_actor = actor;
    target_critic = critic;
    actor_opt = nn::AdamState(actor);
    critic_opt = nn::AdamState(critic);
  }
};

namespace detail {

inline void optimizer_step(const AgentConfig& cfg, nn::Mlp& net, nn::AdamState& state, const nn::Gradients& g,
                           double lr) {
  if (cfg.optimizer == "adam") {
    nn::adam_step(net, g, state, lr, cfg.grad_clip);
  } else {
    nn::sgd_step(net, g, lr, cfg.grad_clip);
  }
}

}  // namespace detail

/// Lowest index wins ties.
inline DiscreteAction argmax_action(const ActionVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<DiscreteAction>(best);
}

struct ActionChoice {
  ActionVector vector{};
  DiscreteAction action = DiscreteAction::RotateLeft;
};

inline ActionChoice select_action(const DdpgAgent& agent, const Eigen::VectorXd& state, bool explore, Rng& rng) {
  const Eigen::VectorXd out = nn::forward(agent.actor, state);
  ActionChoice c;
  for (int i = 0; i < kNumActions; ++i) {
    double v = out(i);
    if (explore && agent.noise_sigma > 0.0) v = std::clamp(v + agent.noise_sigma * standard_normal(rng), -1.0, 1.0);
    c.vector[static_cast<std::size_t>(i)] = v;
  }
  c.action = argmax_action(c.vector);
  return c;
}

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

/// y = r + gamma * (1 - terminal) * Q'(s', pi'(s')).
inline Eigen::VectorXd td_target(const DdpgAgent& agent, const Batch& b) {
  if (b.size() == 0) throw std::invalid_argument("empty batch");
  const Eigen::MatrixXd next_actions = nn::forward(agent.target_actor, b.next_states);
  const Eigen::MatrixXd next_q = nn::forward(agent.target_critic, stack_rows(b.next_states, next_actions));
  Eigen::VectorXd y(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i)
    y(i) = b.rewards(i) + agent.config.gamma * b.continues(i) * next_q(0, i);
  return y;
}

/// Gradient of the mean squared TD error over the batch, and the loss.
inline std::pair<nn::Gradients, double> critic_gradients(const DdpgAgent& agent, const Batch& b) {
  const Eigen::VectorXd y = td_target(agent, b);
  const auto cache = nn::forward_cached(agent.critic, stack_rows(b.states, b.actions));
  const auto n = b.size();
  double loss = 0.0;
  Eigen::MatrixXd upstream(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double err = cache.output()(0, i) - y(i);
    loss += err * err;
    upstream(0, i) = 2.0 * err / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  return {nn::backward(agent.critic, cache, upstream), loss};
}

/// One gradient step on the mean squared TD error; returns the pre-step loss.
inline double update_critic(DdpgAgent& agent, const Batch& b) {
  auto [grads, loss] = critic_gradients(agent, b);
  if (!std::isfinite(loss)) throw DivergenceError("critic loss is not finite");
  detail::optimizer_step(agent.config, agent.critic, agent.critic_opt, grads, agent.config.critic_lr);
  return loss;
}

/// Descent gradient for the actor loss -mean_i Q(s_i, pi(s_i)), plus
/// action_reg * mean_i |z_i|^2 on the pre-tanh outputs z when enabled.
/// Also returns mean_i Q(s_i, pi(s_i)).
inline std::pair<nn::Gradients, double> actor_gradients(const DdpgAgent& agent, const Batch& b) {
  const auto n = b.size();
  const auto actor_cache = nn::forward_cached(agent.actor, b.states);
  const auto critic_cache = nn::forward_cached(agent.critic, stack_rows(b.states, actor_cache.output()));
  double objective = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) objective += critic_cache.output()(0, i);
  objective /= static_cast<double>(n);
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(1, n, -1.0 / static_cast<double>(n));
  const auto critic_grads = nn::backward(agent.critic, critic_cache, upstream);
  const Eigen::MatrixXd d_action = critic_grads.input.bottomRows(kNumActions);
  if (agent.config.action_reg > 0.0) {
    const Eigen::MatrixXd d_pre =
        (2.0 * agent.config.action_reg / static_cast<double>(n)) * nn::output_pre_activation(agent.actor, actor_cache);
    return {nn::backward(agent.actor, actor_cache, d_action, &d_pre), objective};
  }
  return {nn::backward(agent.actor, actor_cache, d_action), objective};
}

/// Ascends the critic's value of the actor's actions; the critic is only
/// read. Returns the pre-step objective.
inline double update_actor(DdpgAgent& agent, const Batch& b) {
  auto [grads, objective] = actor_gradients(agent, b);
  if (!std::isfinite(objective)) throw DivergenceError("actor objective is not finite");
  detail::optimizer_step(agent.config, agent.actor, agent.actor_opt, grads, agent.config.actor_lr);
  return objective;
}

inline void soft_update(nn::Mlp& target, const nn::Mlp& source, double tau) {
  for (std::size_t l = 0; l < target.num_layers(); ++l) {
    target.weights()[l] = tau * source.weights()[l] + (1.0 - tau) * target.weights()[l];
    target.biases()[l] = tau * source.biases()[l] + (1.0 - tau) * target.biases()[l];
  }
}

inline void soft_update(DdpgAgent& agent) {
  soft_update(agent.target_actor, agent.actor, agent.config.tau);
  soft_update(agent.target_critic, agent.critic, agent.config.tau);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const AgentConfig& c) {
  nlohmann::json j = {{"state_size", c.state_size},
                      {"actor_hidden", c.actor_hidden},
                      {"critic_hidden", c.critic_hidden},
                      {"gamma", c.gamma},
                      {"tau", c.tau},
                      {"actor_lr", c.actor_lr},
                      {"critic_lr", c.critic_lr},
                      {"buffer_capacity", c.buffer_capacity},
                      {"batch_size", c.batch_size},
                      {"warmup_steps", c.warmup_steps},
                      {"noise_sigma_start", c.noise_sigma_start},
                      {"noise_sigma_end", c.noise_sigma_end},
                      {"actor_final_scale", c.actor_final_scale},
                      {"optimizer", c.optimizer},
                      {"action_reg", c.action_reg}};
  j["grad_clip"] = c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr);
  return j;
}

/// Reads the keys present in `j` onto `c`; unknown keys are rejected.
inline void apply_json(AgentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("agent config must be an object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "state_size") c.state_size = v.get<int>();
      else if (key == "actor_hidden") c.actor_hidden = v.get<std::vector<int>>();
      else if (key == "critic_hidden") c.critic_hidden = v.get<std::vector<int>>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "actor_lr") c.actor_lr = v.get<double>();
      else if (key == "critic_lr") c.critic_lr = v.get<double>();
      else if (key == "buffer_capacity") c.buffer_capacity = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "warmup_steps") c.warmup_steps = v.get<std::size_t>();
      else if (key == "noise_sigma_start") c.noise_sigma_start = v.get<double>();
      else if (key == "noise_sigma_end") c.noise_sigma_end = v.get<double>();
      else if (key == "actor_final_scale") c.actor_final_scale = v.get<double>();
      else if (key == "optimizer") c.optimizer = v.get<std::string>();
      else if (key == "action_reg") c.action_reg = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else throw ConfigError("unknown agent key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("agent." + key + ": " + e.what());
    }
  }
}

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_state_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ConfigError("malformed rng state");
  return rng;
}

struct AgentCheckpoint {
  DdpgAgent agent;
  int phase_id = 0;
  nlohmann::json extra;  // sensor / run metadata
  std::string rng_state;
};

inline nlohmann::json checkpoint_to_json(const DdpgAgent& agent, int phase_id, const nlohmann::json& extra,
                                         const std::string& rng_state) {
  return {{"format_version", nn::kCheckpointFormatVersion},
          {"phase_id", phase_id},
          {"config", to_json(agent.config)},
          {"noise_sigma", agent.noise_sigma},
          {"actor", nn::to_json(agent.actor)},
          {"critic", nn::to_json(agent.critic)},
          {"target_actor", nn::to_json(agent.target_actor)},
          {"target_critic", nn::to_json(agent.target_critic)},
          {"actor_opt", nn::to_json(agent.actor_opt)},
          {"critic_opt", nn::to_json(agent.critic_opt)},
          {"extra", extra},
          {"rng_state", rng_state}};
}

inline AgentCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != nn::kCheckpointFormatVersion)
      throw ConfigError("unsupported checkpoint format_version");
    AgentCheckpoint cp;
    AgentConfig cfg;
    apply_json(cfg, j.at("config"));
    cfg.validate();
    cp.agent.config = cfg;
    cp.agent.buffer = ReplayBuffer(cfg.buffer_capacity);
    cp.agent.noise_sigma = j.at("noise_sigma").get<double>();
    cp.agent.actor = nn::mlp_from_json(j.at("actor"));
    cp.agent.critic = nn::mlp_from_json(j.at("critic"));
    cp.agent.target_actor = nn::mlp_from_json(j.at("target_actor"));
    cp.agent.target_critic = nn::mlp_from_json(j.at("target_critic"));
    if (cp.agent.actor.input_dim() != cfg.state_size || cp.agent.actor.output_dim() != kNumActions ||
        cp.agent.critic.input_dim() != cfg.state_size + kNumActions ||
        cp.agent.target_actor.layer_dims() != cp.agent.actor.layer_dims() ||
        cp.agent.target_critic.layer_dims() != cp.agent.critic.layer_dims())
      throw ConfigError("checkpoint networks are inconsistent with state_size");
    cp.agent.actor_opt = nn::adam_state_from_json(j.at("actor_opt"), cp.agent.actor);
    cp.agent.critic_opt = nn::adam_state_from_json(j.at("critic_opt"), cp.agent.critic);
    cp.phase_id = j.at("phase_id").get<int>();
    cp.extra = j.value("extra", nlohmann::json::object());
    cp.rng_state = j.at("rng_state").get<std::string>();
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed agent checkpoint: ") + e.what());
  }
}

/// Binary replay dump: magic, then u64 capacity, cursor, size, state width,
/// then per slot the state, action, reward, next state and terminal flag as
/// native doubles.
inline constexpr char kReplayMagic[8] = {'S', 'M', 'X', 'R', 'P', 'L', '0', '1'};

inline void save_replay(const ReplayBuffer& b, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t width = b.empty() ? 0 : static_cast<std::uint64_t>(b.at(0).state.size());
  const std::uint64_t head[4] = {b.capacity(), b.cursor(), b.size(), width};
  out.write(kReplayMagic, sizeof kReplayMagic);
  out.write(reinterpret_cast<const char*>(head), sizeof head);
  std::vector<double> row;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Transition& t = b.at(i);
    row.assign(t.state.data(), t.state.data() + t.state.size());
    row.insert(row.end(), t.action.begin(), t.action.end());
    row.push_back(t.reward);
    row.insert(row.end(), t.next_state.data(), t.next_state.data() + t.next_state.size());
    row.push_back(t.terminal ? 1.0 : 0.0);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline ReplayBuffer load_replay(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  std::uint64_t head[4];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (!in || std::memcmp(magic, kReplayMagic, sizeof magic) != 0) throw ConfigError(path.string() + ": not a replay dump");
  const auto [capacity, cursor, size, width] = head;
  if (capacity == 0 || size > capacity) throw ConfigError(path.string() + ": bad replay header");
  const std::size_t row_len = 2 * width + kNumActions + 2;
  std::vector<double> row(row_len);
  std::vector<Transition> slots;
  slots.reserve(size);
  for (std::uint64_t i = 0; i < size; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_len * sizeof(double)));
    if (!in) throw ConfigError(path.string() + ": truncated replay dump");
    Transition t;
    const auto w = static_cast<Eigen::Index>(width);
    t.state = Eigen::Map<const Eigen::VectorXd>(row.data(), w);
    for (int k = 0; k < kNumActions; ++k) t.action[static_cast<std::size_t>(k)] = row[width + k];
    t.reward = row[width + kNumActions];
    t.next_state = Eigen::Map<const Eigen::VectorXd>(row.data() + width + kNumActions + 1, w);
    t.terminal = row[row_len - 1] != 0.0;
    slots.push_back(std::move(t));
  }
  try {
    return ReplayBuffer::restore(capacity, std::move(slots), cursor);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace semex
