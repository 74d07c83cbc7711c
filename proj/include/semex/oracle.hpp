#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "semex/scene.hpp"

namespace semex {

/// Stand-in for an open-vocabulary detector hit.
struct Detection {
  int class_id = 0;
  double confidence = 0.0;  // (0, 1]
};

/// Scene desirability in [-1, +1].
struct SemanticScore {
  double value = 0.0;
};

/// Per-run call counters; owned by the caller's metrics context.
struct OracleCounters {
  std::uint64_t detector_calls = 0;
  std::uint64_t semantic_calls = 0;
};

inline std::vector<Detection> detect(const GridScene& scene, const AgentPose& pose, const SensorParams& sensor,
                                     OracleCounters& counters) {
  ++counters.detector_calls;
  std::vector<Detection> out;
  for (const auto& o : visible_set(scene, pose, sensor).objects) out.push_back({o.class_id, o.confidence});
  return out;
}

/// Mean semantic field over the free cells in view (agent cell excluded);
/// -1 when nothing free is visible.
inline SemanticScore semantic_score(const GridScene& scene, const AgentPose& pose, const SensorParams& sensor) {
  const int r = static_cast<int>(std::ceil(sensor.max_range));
  double sum = 0.0;
  int count = 0;
  for (int y = std::max(0, pose.y - r); y <= std::min(scene.height - 1, pose.y + r); ++y) {
    for (int x = std::max(0, pose.x - r); x <= std::min(scene.width - 1, pose.x + r); ++x) {
      if ((x == pose.x && y == pose.y) || scene.blocked(x, y)) continue;
      if (!cell_visible(scene, pose, {x, y}, sensor)) continue;
      sum += scene.semantic(x, y);
      ++count;
    }
  }
  if (count == 0) return {-1.0};
  return {std::clamp(sum / count, -1.0, 1.0)};
}

/// Injection point for the semantic scorer (tests swap in corrupted scorers).
using SemanticOracle = std::function<SemanticScore(const GridScene&, const AgentPose&, const SensorParams&)>;

}  // namespace semex
