#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "semex/agent.hpp"
#include "semex/episode.hpp"
#include "semex/errors.hpp"
#include "semex/metrics.hpp"
#include "semex/reward.hpp"
#include "semex/scene.hpp"
#include "semex/scene_io.hpp"

namespace semex {

/// A scene pool entry: a generation seed or a scene file.
using SceneSource = std::variant<std::uint64_t, std::filesystem::path>;

struct PhaseConfig {
  int phase_id = 1;
  RewardWeights weights;
  int episodes = 1;
  int max_steps_per_episode = 200;
  std::vector<SceneSource> scene_pool;
  bool carry_agent = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SensorParams sensor;
  SceneParams scene_params;
  AgentConfig agent;
  bool retain_buffer = true;
  std::vector<PhaseConfig> phases;
};

/// Layer weights per curriculum phase: geometry only, then objects, then
/// the semantic layer.
inline RewardWeights phase_weights(int phase_id) {
  RewardWeights w;
  switch (phase_id) {
    case 1: w.alpha = 1.0, w.beta = 0.0, w.delta = 0.0; break;
    case 2: w.alpha = 0.25, w.beta = 0.75, w.delta = 0.0; break;
    case 3: w.alpha = 0.25, w.beta = 0.75, w.delta = 2.0; break;
    default: throw std::invalid_argument("phase_id must be 1, 2 or 3");
  }
  return w;
}

inline void validate(const RunConfig& c) {
  if (c.phases.empty()) throw ConfigError("config needs at least one phase");
  if (c.phases.size() > 3) throw ConfigError("at most three phases");
  for (std::size_t i = 0; i < c.phases.size(); ++i) {
    const auto& p = c.phases[i];
    if (p.phase_id != static_cast<int>(i) + 1) throw ConfigError("phases must be ordered 1, 2, 3");
    try {
      p.weights.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("phase " + std::to_string(p.phase_id) + ": " + e.what());
    }
    if (p.phase_id == 1 && (p.weights.beta != 0.0 || p.weights.delta != 0.0))
      throw ConfigError("phase 1 must have beta = delta = 0");
    if (p.phase_id == 2 && p.weights.delta != 0.0) throw ConfigError("phase 2 must have delta = 0");
    if (p.episodes < 1) throw ConfigError("phase episodes must be >= 1");
    if (p.max_steps_per_episode < 1) throw ConfigError("max_steps_per_episode must be >= 1");
    if (p.scene_pool.empty()) throw ConfigError("phase " + std::to_string(p.phase_id) + " has an empty scene_pool");
  }
  if (c.sensor.n_rays < 1 || !(c.sensor.max_range > 0.0) || !(c.sensor.fov_deg > 0.0 && c.sensor.fov_deg < 180.0))
    throw ConfigError("invalid sensor parameters");
  if (c.agent.state_size != c.sensor.n_rays + kContextFeatures)
    throw ConfigError("agent.state_size must equal sensor.n_rays + " + std::to_string(kContextFeatures));
  c.agent.validate();
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

inline RewardWeights parse_weights(const nlohmann::json& j, const std::string& where) {
  reject_unknown(j, {"alpha", "beta", "delta", "collision_penalty", "max_new_objects", "query_penalty"}, where);
  RewardWeights w;
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.delta = j.value("delta", w.delta);
  w.collision_penalty = j.value("collision_penalty", w.collision_penalty);
  w.max_new_objects = j.value("max_new_objects", w.max_new_objects);
  w.query_penalty = j.value("query_penalty", w.query_penalty);
  return w;
}

}  // namespace detail

/// Parses a run config document. Relative scene paths resolve against
/// `base_dir`. Unknown keys anywhere are errors.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  try {
    detail::reject_unknown(j, {"seed", "sensor", "scene_params", "agent", "retain_buffer", "phases"}, "config");
    c.seed = j.value("seed", std::uint64_t{0});
    c.retain_buffer = j.value("retain_buffer", true);
    if (j.contains("sensor")) {
      const auto& s = j["sensor"];
      detail::reject_unknown(s, {"n_rays", "max_range", "fov_deg"}, "sensor");
      c.sensor.n_rays = s.value("n_rays", c.sensor.n_rays);
      c.sensor.max_range = s.value("max_range", c.sensor.max_range);
      c.sensor.fov_deg = s.value("fov_deg", c.sensor.fov_deg);
    }
    c.agent.state_size = c.sensor.n_rays + kContextFeatures;
    if (j.contains("scene_params")) {
      const auto& s = j["scene_params"];
      detail::reject_unknown(s, {"width", "height", "num_objects", "num_keypoints", "wall_density", "num_classes"},
                             "scene_params");
      auto& p = c.scene_params;
      p.width = s.value("width", p.width);
      p.height = s.value("height", p.height);
      p.num_objects = s.value("num_objects", p.num_objects);
      p.num_keypoints = s.value("num_keypoints", p.num_keypoints);
      p.wall_density = s.value("wall_density", p.wall_density);
      p.num_classes = s.value("num_classes", p.num_classes);
    }
    if (j.contains("agent")) apply_json(c.agent, j["agent"]);
    for (const auto& pj : j.at("phases")) {
      detail::reject_unknown(pj, {"phase_id", "weights", "episodes", "max_steps_per_episode", "scene_pool", "carry_agent"},
                             "phase");
      PhaseConfig p;
      p.phase_id = pj.at("phase_id").get<int>();
      p.weights = pj.contains("weights") ? detail::parse_weights(pj["weights"], "phase.weights")
                                         : phase_weights(p.phase_id);
      p.episodes = pj.at("episodes").get<int>();
      p.max_steps_per_episode = pj.value("max_steps_per_episode", 200);
      p.carry_agent = pj.value("carry_agent", true);
      for (const auto& e : pj.at("scene_pool")) {
        if (e.is_number_integer() && (e.is_number_unsigned() || e.get<std::int64_t>() >= 0)) {
          p.scene_pool.emplace_back(e.get<std::uint64_t>());
        } else if (e.is_string()) {
          std::filesystem::path path = e.get<std::string>();
          p.scene_pool.emplace_back(path.is_relative() ? base_dir / path : path);
        } else {
          throw ConfigError("scene_pool entries must be non-negative integer seeds or file paths");
        }
      }
      c.phases.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

inline std::vector<GridScene> materialize_scenes(const std::vector<SceneSource>& pool, const SceneParams& params) {
  std::vector<GridScene> out;
  for (const auto& src : pool) {
    if (const auto* seed = std::get_if<std::uint64_t>(&src)) {
      out.push_back(generate_scene(*seed, params));
    } else {
      out.push_back(load_scene(std::get<std::filesystem::path>(src)));
    }
  }
  return out;
}

inline nlohmann::json weights_to_json(const RewardWeights& w) {
  return {{"alpha", w.alpha},
          {"beta", w.beta},
          {"delta", w.delta},
          {"collision_penalty", w.collision_penalty},
          {"max_new_objects", w.max_new_objects},
          {"query_penalty", w.query_penalty}};
}

inline nlohmann::json sensor_to_json(const SensorParams& s) {
  return {{"n_rays", s.n_rays}, {"max_range", s.max_range}, {"fov_deg", s.fov_deg}};
}

inline constexpr const char* kTrainCsvHeader =
    "phase,episode,scene_id,alpha,beta,delta,steps,total_reward,path_length,tdo,tcs,tdc,queries,collisions,updates,"
    "critic_loss,actor_objective";

struct PhaseOutcome {
  int phase_id = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::vector<EpisodeMetrics> episodes;
};

struct CurriculumResult {
  std::vector<PhaseOutcome> phases;
  DdpgAgent agent;  // state after the last phase
};

struct CurriculumOptions {
  std::ostream* progress = nullptr;
  std::size_t first_phase = 0;  // index into config.phases
  const DdpgAgent* initial_agent = nullptr;  // warm start for first_phase
  int progress_every = 10;
};

/// Exploration noise at episode `e` of `n`: linear from start to end.
inline double annealed_sigma(const AgentConfig& c, int e, int n) {
  if (n <= 1) return c.noise_sigma_start;
  return c.noise_sigma_start + (c.noise_sigma_end - c.noise_sigma_start) * e / (n - 1);
}

inline std::uint64_t phase_stream_seed(std::uint64_t seed, int phase_id) {
  return derive_seed(seed, 0x9A5E0000ULL + static_cast<std::uint64_t>(phase_id));
}

inline std::uint64_t agent_init_seed(std::uint64_t seed, int phase_id) {
  return derive_seed(seed, 0xA6E70000ULL + static_cast<std::uint64_t>(phase_id));
}

inline nlohmann::json checkpoint_extra(const RunConfig& c, const PhaseConfig& p) {
  return {{"sensor", sensor_to_json(c.sensor)}, {"weights", weights_to_json(p.weights)}, {"seed", c.seed}};
}

/// Runs the phases in order, writing checkpoint_phase<N>.json and
/// metrics_phase<N>.csv per phase plus train_log.jsonl under out_dir.
/// Each phase draws from its own seed stream, so resuming phase N+1 from the
/// phase-N checkpoint reproduces an uninterrupted run.
inline CurriculumResult run_curriculum(const RunConfig& config, const std::filesystem::path& out_dir,
                                       const CurriculumOptions& opt = {}) {
  validate(config);
  std::vector<std::vector<GridScene>> pools;
  for (const auto& p : config.phases) pools.push_back(materialize_scenes(p.scene_pool, config.scene_params));

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::ofstream log(out_dir / "train_log.jsonl", opt.first_phase == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + (out_dir / "train_log.jsonl").string());

  CurriculumResult result;
  DdpgAgent& agent = result.agent;
  if (opt.initial_agent) agent = *opt.initial_agent;

  for (std::size_t pi = opt.first_phase; pi < config.phases.size(); ++pi) {
    const PhaseConfig& phase = config.phases[pi];
    const bool fresh = (pi == opt.first_phase && !opt.initial_agent) || (pi > opt.first_phase && !phase.carry_agent);
    if (fresh) agent = DdpgAgent(config.agent, agent_init_seed(config.seed, phase.phase_id));
    if (!config.retain_buffer) agent.buffer.clear();

    Rng rng(phase_stream_seed(config.seed, phase.phase_id));
    EpisodeOptions eo;
    eo.max_steps = phase.max_steps_per_episode;
    eo.explore = true;
    eo.sensor = config.sensor;

    PhaseOutcome outcome;
    outcome.phase_id = phase.phase_id;
    outcome.metrics = out_dir / ("metrics_phase" + std::to_string(phase.phase_id) + ".csv");
    outcome.checkpoint = out_dir / ("checkpoint_phase" + std::to_string(phase.phase_id) + ".json");
    std::ofstream csv(outcome.metrics);
    if (!csv) throw IoError("cannot write " + outcome.metrics.string());
    csv << kTrainCsvHeader << '\n';

    const auto& scenes = pools[pi];
    double reward_window = 0.0;
    for (int e = 0; e < phase.episodes; ++e) {
      agent.noise_sigma = annealed_sigma(agent.config, e, phase.episodes);
      const GridScene& scene = scenes[static_cast<std::size_t>(e) % scenes.size()];
      EpisodeResult ep;
      try {
        ep = run_episode(agent, scene, phase.weights, rng, eo);
      } catch (const DivergenceError& err) {
        throw DivergenceError("phase " + std::to_string(phase.phase_id) + ", episode " + std::to_string(e) + ": " +
                              err.what());
      }
      const auto& m = ep.metrics;
      csv << phase.phase_id << ',' << e << ',' << scene.scene_id << ',' << format_double(phase.weights.alpha) << ','
          << format_double(phase.weights.beta) << ',' << format_double(phase.weights.delta) << ',' << m.steps << ','
          << format_double(m.total_reward) << ',' << format_double(m.path_length) << ',' << m.tdo << ','
          << format_double(m.tcs) << ',' << m.detector_calls << ',' << m.queries << ',' << m.collisions << ','
          << m.updates << ',' << format_double(m.mean_critic_loss) << ',' << format_double(m.mean_actor_objective)
          << '\n';
      log << nlohmann::json{{"phase", phase.phase_id},
                            {"episode", e},
                            {"scene_id", scene.scene_id},
                            {"mean_reward", m.steps ? m.total_reward / m.steps : 0.0},
                            {"critic_loss", m.mean_critic_loss},
                            {"actor_objective", m.mean_actor_objective},
                            {"path_length", m.path_length},
                            {"queries", m.queries}}
                 .dump()
          << '\n';
      reward_window += m.steps ? m.total_reward / m.steps : 0.0;
      if (opt.progress && ((e + 1) % opt.progress_every == 0 || e + 1 == phase.episodes)) {
        const int n = (e % opt.progress_every) + 1;
        *opt.progress << "phase " << phase.phase_id << " episode " << e + 1 << '/' << phase.episodes
                      << " mean_reward " << std::fixed << std::setprecision(4) << reward_window / n << " loss "
                      << m.mean_critic_loss << std::defaultfloat << '\n';
        reward_window = 0.0;
      }
      outcome.episodes.push_back(m);
    }
    if (!csv) throw IoError("write failed: " + outcome.metrics.string());

    nlohmann::json extra = checkpoint_extra(config, phase);
    if (config.retain_buffer && pi + 1 < config.phases.size()) {
      // The next phase trains on this buffer, so a resume needs it too.
      const std::string name = "replay_phase" + std::to_string(phase.phase_id) + ".bin";
      save_replay(agent.buffer, out_dir / name);
      extra["replay_file"] = name;
    }
    std::ofstream cp(outcome.checkpoint);
    if (!cp) throw IoError("cannot write " + outcome.checkpoint.string());
    cp << checkpoint_to_json(agent, phase.phase_id, extra, rng_state_string(rng)).dump() << '\n';
    if (!cp) throw IoError("write failed: " + outcome.checkpoint.string());
    result.phases.push_back(std::move(outcome));
  }
  return result;
}

inline AgentCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto cp = checkpoint_from_json(j);
  if (cp.extra.contains("replay_file")) {
    const auto replay = path.parent_path() / cp.extra["replay_file"].get<std::string>();
    if (std::filesystem::exists(replay)) cp.agent.buffer = load_replay(replay);
  }
  return cp;
}

}  // namespace semex
