#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "semex/agent.hpp"
#include "semex/oracle.hpp"
#include "semex/reward.hpp"
#include "semex/scene.hpp"

namespace semex {

struct StepRecord {
  std::int64_t t = 0;
  DiscreteAction action = DiscreteAction::RotateLeft;
  bool collided = false;
  RewardBreakdown reward;
  AgentPose pose;  // after the step
  std::vector<Detection> detections;
  std::optional<double> semantic_score;  // raw score, query steps only
};

struct EpisodeMetrics {
  std::int64_t steps = 0;
  double path_length = 0.0;  // cells; one successful MoveForward = 1
  std::int64_t tdo = 0;
  double tcs = 0.0;
  std::int64_t detector_calls = 0;
  std::int64_t queries = 0;
  std::int64_t collisions = 0;
  double total_reward = 0.0;
  std::int64_t updates = 0;
  double mean_critic_loss = 0.0;
  double mean_actor_objective = 0.0;
};

struct EpisodeResult {
  std::string scene_id;
  int episode = 0;
  AgentPose start;
  std::vector<StepRecord> steps;
  EpisodeMetrics metrics;
};

using ScriptedPolicy = std::function<DiscreteAction(const Eigen::VectorXd& state, Rng& rng)>;

struct EpisodeOptions {
  int max_steps = 200;
  bool explore = true;
  SensorParams sensor;
  SemanticOracle semantic;  // empty: semantic_score
  ScriptedPolicy scripted;  // empty: the agent's actor
};

inline AgentPose random_spawn(const GridScene& scene, Rng& rng) {
  const auto free = scene.free_cells();
  const Cell c = free[uniform_index(rng, free.size())];
  return {c.x, c.y, heading_from_degrees(90 * static_cast<int>(uniform_index(rng, 4)))};
}

/// Half-width of the central view sector, in degrees.
inline constexpr double kCenterSectorDeg = 15.0;

/// Sector of a visible cell relative to the view axis: 0 left, 1 center, 2 right.
inline int view_sector(const AgentPose& pose, Cell c) {
  const Cell f = heading_step(pose.heading);
  const double rx = c.x - pose.x;
  const double ry = c.y - pose.y;
  const double forward = rx * f.x + ry * f.y;
  const double lateral = rx * -f.y + ry * f.x;  // positive to the right
  if (rx == 0.0 && ry == 0.0) return 1;
  const double angle = std::atan2(lateral, forward) * 180.0 / std::numbers::pi;
  if (angle < -kCenterSectorDeg) return 0;
  if (angle > kCenterSectorDeg) return 2;
  return 1;
}

/// Agent input at `pose`: depth plus the context built from the visible
/// objects and the episode memory. Does not count as a detector call.
inline Eigen::VectorXd observe(const GridScene& scene, const AgentPose& pose, const SensorParams& sensor,
                               const EpisodeMemory& memory) {
  StateContext ctx;
  ctx.query_streak = memory.query_streak;
  ctx.seen_classes = static_cast<int>(memory.seen_classes.size());
  for (const auto& o : scene.objects)
    if (cell_visible(scene, pose, o.position, sensor)) ++ctx.objects_by_sector[view_sector(pose, o.position)];
  return encode_state(raycast_depth(scene, pose, sensor), ctx);
}

namespace detail {

inline ActionVector scripted_vector(DiscreteAction a) {
  ActionVector v;
  v.fill(-1.0);
  v[static_cast<std::size_t>(a)] = 1.0;
  return v;
}

// `learner` is null for frozen-policy rollouts.
inline EpisodeResult run_episode_impl(const DdpgAgent& agent, DdpgAgent* learner, const GridScene& scene,
                                      const RewardWeights& weights, Rng& rng, const EpisodeOptions& opt) {
  EpisodeResult res;
  res.scene_id = scene.scene_id;
  if (opt.max_steps <= 0) return res;

  EpisodeMemory memory;
  OracleCounters counters;
  AgentPose pose = random_spawn(scene, rng);
  res.start = pose;
  res.steps.reserve(static_cast<std::size_t>(opt.max_steps));

  Eigen::VectorXd state = observe(scene, pose, opt.sensor, memory);
  double loss_sum = 0.0;
  double objective_sum = 0.0;
  for (int t = 0; t < opt.max_steps; ++t) {
    ActionChoice choice;
    if (opt.scripted) {
      choice.action = opt.scripted(state, rng);
      choice.vector = scripted_vector(choice.action);
    } else {
      choice = select_action(agent, state, opt.explore, rng);
    }

    const StepResult moved = step_pose(scene, pose, choice.action);
    StepRecord rec;
    rec.t = t;
    rec.action = choice.action;
    rec.collided = moved.collided;
    rec.pose = moved.pose;

    const VisibleSet visible = visible_set(scene, moved.pose, opt.sensor);
    rec.detections = detect(scene, moved.pose, opt.sensor, counters);

    LayerInputs layers;
    if (!moved.collided) {
      layers.r_geom = geometric_reward(memory, visible.keypoints);
      layers.r_obj = object_reward(memory, rec.detections, weights.max_new_objects);
    }
    if (choice.action == DiscreteAction::VlmQuery) {
      const SemanticScore sc = opt.semantic ? opt.semantic(scene, moved.pose, opt.sensor)
                                            : semantic_score(scene, moved.pose, opt.sensor);
      ++counters.semantic_calls;
      rec.semantic_score = sc.value;
      layers.r_sem = discretize_semantic(sc);
    }
    rec.reward = compose_reward(moved.collided, choice.action, layers, weights, memory);

    Eigen::VectorXd next_state = observe(scene, moved.pose, opt.sensor, memory);
    if (learner) {
      // Episodes end only by the step limit, which is a truncation rather
      // than a terminal state, so every transition bootstraps.
      learner->buffer.push({state, choice.vector, rec.reward.total, next_state, false});
      const auto& cfg = learner->config;
      if (learner->buffer.size() >= std::max(cfg.warmup_steps, cfg.batch_size)) {
        const Batch batch = learner->buffer.sample(rng, cfg.batch_size);
        loss_sum += update_critic(*learner, batch);
        objective_sum += update_actor(*learner, batch);
        soft_update(*learner);
        ++res.metrics.updates;
      }
    }

    auto& m = res.metrics;
    ++m.steps;
    if (choice.action == DiscreteAction::MoveForward && !moved.collided) m.path_length += 1.0;
    if (moved.collided) ++m.collisions;
    if (choice.action == DiscreteAction::VlmQuery) ++m.queries;
    m.tdo += static_cast<std::int64_t>(rec.detections.size());
    for (const auto& d : rec.detections) m.tcs += d.confidence;
    m.total_reward += rec.reward.total;

    res.steps.push_back(std::move(rec));
    pose = moved.pose;
    state = std::move(next_state);
  }
  res.metrics.detector_calls = static_cast<std::int64_t>(counters.detector_calls);
  if (res.metrics.updates > 0) {
    res.metrics.mean_critic_loss = loss_sum / static_cast<double>(res.metrics.updates);
    res.metrics.mean_actor_objective = objective_sum / static_cast<double>(res.metrics.updates);
  }
  return res;
}

}  // namespace detail

/// Training episode: acts (with exploration noise when requested), stores
/// transitions and runs one critic/actor/target update per step once the
/// replay memory holds the warm-up amount.
inline EpisodeResult run_episode(DdpgAgent& agent, const GridScene& scene, const RewardWeights& weights, Rng& rng,
                                 const EpisodeOptions& opt) {
  return detail::run_episode_impl(agent, &agent, scene, weights, rng, opt);
}

/// Frozen-policy episode; the agent is not modified.
inline EpisodeResult rollout(const DdpgAgent& agent, const GridScene& scene, const RewardWeights& weights, Rng& rng,
                             const EpisodeOptions& opt) {
  return detail::run_episode_impl(agent, nullptr, scene, weights, rng, opt);
}

}  // namespace semex
