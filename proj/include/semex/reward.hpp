#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>

#include "semex/action.hpp"
#include "semex/oracle.hpp"

namespace semex {

struct RewardWeights {
  double alpha = 1.0;               // geometric layer
  double beta = 0.0;                // object layer
  double delta = 0.0;               // semantic layer
  double collision_penalty = -1.0;  // replaces the whole reward on a collision step
  int max_new_objects = 5;          // cap on the per-step object reward
  double query_penalty = -0.5;      // per repeated query beyond the first in a streak

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && delta >= 0.0))
      throw std::invalid_argument("reward weights alpha, beta, delta must be >= 0");
    if (!(collision_penalty < 0.0)) throw std::invalid_argument("collision_penalty must be < 0");
    if (!(query_penalty <= 0.0)) throw std::invalid_argument("query_penalty must be <= 0");
    if (max_new_objects < 1) throw std::invalid_argument("max_new_objects must be >= 1");
  }
};

/// Per-episode novelty state. Reset at every episode start.
struct EpisodeMemory {
  std::set<int> seen_keypoints;
  std::set<int> seen_classes;
  std::int64_t cumulative_feature_count = 0;
  int query_streak = 0;
  std::int64_t step_index = 0;
};

/// Layer values fed into the composition for one step.
struct LayerInputs {
  double r_geom = 0.0;
  double r_obj = 0.0;
  double r_sem = 0.0;
};

struct RewardBreakdown {
  double r_geom = 0.0;
  double r_obj = 0.0;
  double r_sem = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

/// Counts and records keypoints seen for the first time this episode.
inline double geometric_reward(EpisodeMemory& memory, std::span<const int> visible_keypoints) {
  std::int64_t fresh = 0;
  for (int id : visible_keypoints)
    if (memory.seen_keypoints.insert(id).second) ++fresh;
  memory.cumulative_feature_count += fresh;
  return static_cast<double>(fresh);
}

/// min(number of classes new to this episode, cap). All new classes are
/// remembered, including those beyond the cap.
inline double object_reward(EpisodeMemory& memory, std::span<const Detection> detections, int cap) {
  if (cap < 1) throw std::invalid_argument("object reward cap must be >= 1");
  int fresh = 0;
  for (const auto& d : detections)
    if (memory.seen_classes.insert(d.class_id).second) ++fresh;
  return static_cast<double>(std::min(fresh, cap));
}

/// Three-level discretization with breakpoints at -0.3 and +0.3; the top
/// bucket is closed at +1.
inline double discretize_semantic(SemanticScore sc) {
  const double v = sc.value;
  if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("semantic score outside [-1, 1]: " + std::to_string(v));
  if (v < -0.3) return -1.0;
  if (v < 0.3) return 0.0;
  return 1.0;
}

/// Collision replaces the step reward with the collision penalty. Otherwise
/// the weighted layer sum applies, the semantic layer only counting on query
/// steps, with a penalty for every query after the first in a streak.
inline RewardBreakdown compose_reward(bool collided, DiscreteAction action, const LayerInputs& in,
                                      const RewardWeights& w, EpisodeMemory& memory) {
  const bool query = action == DiscreteAction::VlmQuery;
  memory.query_streak = query ? memory.query_streak + 1 : 0;
  ++memory.step_index;

  RewardBreakdown b;
  if (collided) {
    b.total = w.collision_penalty;
    return b;
  }
  b.r_geom = in.r_geom;
  b.r_obj = in.r_obj;
  b.r_sem = query ? in.r_sem : 0.0;
  b.penalty = query && memory.query_streak > 1 ? w.query_penalty * (memory.query_streak - 1) : 0.0;
  b.total = w.alpha * b.r_geom + w.beta * b.r_obj + w.delta * b.r_sem + b.penalty;
  return b;
}

}  // namespace semex
