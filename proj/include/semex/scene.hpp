#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semex/action.hpp"
#include "semex/errors.hpp"
#include "semex/rng.hpp"

namespace semex {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(Cell, Cell) = default;
};

/// Compass heading in degrees, clockwise from north (north = -y).
enum class Heading : int { North = 0, East = 90, South = 180, West = 270 };

inline Heading heading_from_degrees(int deg) {
  switch (((deg % 360) + 360) % 360) {
    case 0: return Heading::North;
    case 90: return Heading::East;
    case 180: return Heading::South;
    case 270: return Heading::West;
    default: throw std::invalid_argument("heading must be a multiple of 90 degrees");
  }
}

inline int degrees(Heading h) { return static_cast<int>(h); }

inline Cell heading_step(Heading h) {
  switch (h) {
    case Heading::North: return {0, -1};
    case Heading::East: return {1, 0};
    case Heading::South: return {0, 1};
    case Heading::West: return {-1, 0};
  }
  return {0, 0};
}

struct AgentPose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::North;
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

struct SceneObject {
  int object_id = 0;
  int class_id = 0;
  Cell position;
  double base_confidence = 1.0;
};

struct Keypoint {
  int keypoint_id = 0;
  Cell position;
};

/// Static world. Row-major storage; index = y * width + x.
struct GridScene {
  std::string scene_id;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> occupancy;  // 1 = blocked
  std::vector<SceneObject> objects;
  std::vector<Keypoint> keypoints;
  std::vector<double> semantic_field;

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  // Outside the grid counts as blocked.
  bool blocked(int x, int y) const { return !in_bounds(x, y) || occupancy[index(x, y)] != 0; }
  bool blocked(Cell c) const { return blocked(c.x, c.y); }
  double semantic(int x, int y) const { return semantic_field[index(x, y)]; }

  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (!blocked(x, y)) out.push_back({x, y});
    return out;
  }
};

struct SceneParams {
  int width = 16;
  int height = 16;
  int num_objects = 12;
  int num_keypoints = 40;
  double wall_density = 0.15;
  int num_classes = 10;
};

/// Ray sensor and field of view shared by depth, visibility and the oracles.
struct SensorParams {
  int n_rays = 128;
  double max_range = 10.0;
  double fov_deg = 90.0;
};

namespace detail {

inline bool free_space_connected(const std::vector<std::uint8_t>& occ, int w, int h) {
  std::vector<std::uint8_t> seen(occ.size(), 0);
  std::vector<int> stack;
  std::size_t free_total = 0;
  for (std::size_t i = 0; i < occ.size(); ++i) {
    if (occ[i] == 0) {
      if (stack.empty() && free_total == 0) {
        stack.push_back(static_cast<int>(i));
        seen[i] = 1;
      }
      ++free_total;
    }
  }
  if (free_total == 0) return false;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    ++reached;
    const int x = i % w;
    const int y = i / w;
    const int nbr[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (const auto& n : nbr) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
      const int j = n[1] * w + n[0];
      if (occ[j] == 0 && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return reached == free_total;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline int blocked_neighbours8(const GridScene& s, int x, int y) {
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if ((dx != 0 || dy != 0) && s.blocked(x + dx, y + dy)) ++n;
  return n;
}

inline int blocked_neighbours4(const GridScene& s, int x, int y) {
  return int(s.blocked(x + 1, y)) + int(s.blocked(x - 1, y)) + int(s.blocked(x, y + 1)) +
         int(s.blocked(x, y - 1));
}

// Object kernel: 1 within radius 2, linear fall-off to 0 at radius 4.
inline double object_kernel(double d) { return std::clamp((4.0 - d) / 2.0, 0.0, 1.0); }

}  // namespace detail

/// Semantic field: close to +1 around object clusters, 0 in open space,
/// approaching -1 along bare walls. Blocked cells hold -1.
inline std::vector<double> compute_semantic_field(const GridScene& s) {
  std::vector<double> field(s.occupancy.size(), -1.0);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (s.blocked(x, y)) continue;
      double obj = 0.0;
      for (const auto& o : s.objects) {
        const double dx = o.position.x - x;
        const double dy = o.position.y - y;
        obj += detail::object_kernel(std::sqrt(dx * dx + dy * dy));
      }
      obj = std::min(obj, 1.0);
      const double wallness = std::min(1.0, detail::blocked_neighbours8(s, x, y) / 3.0);
      field[s.index(x, y)] = std::clamp(obj - (1.0 - obj) * wallness, -1.0, 1.0);
    }
  }
  return field;
}

inline constexpr int kGenerationAttempts = 32;

inline GridScene generate_scene(std::uint64_t seed, const SceneParams& p) {
  if (p.width < 8 || p.height < 8) throw std::invalid_argument("scene must be at least 8x8");
  if (p.num_objects < 0 || p.num_keypoints < 0) throw std::invalid_argument("negative placement count");
  if (!(p.wall_density >= 0.0 && p.wall_density <= 0.4))
    throw std::invalid_argument("wall_density must lie in [0, 0.4]");
  if (p.num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");

  const int w = p.width;
  const int h = p.height;
  const int interior = (w - 2) * (h - 2);
  const int target_blocked = static_cast<int>(std::lround(p.wall_density * interior));
  const int free_after = interior - target_blocked;
  if (p.num_objects > free_after || p.num_keypoints > free_after) {
    throw GenerationInfeasible("placement counts exceed the " + std::to_string(free_after) +
                               " free cells available");
  }

  Rng rng(derive_seed(seed, 0x5CE7E));
  for (int attempt = 0; attempt < kGenerationAttempts; ++attempt) {
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(w * h), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (x == 0 || y == 0 || x == w - 1 || y == h - 1) occ[y * w + x] = 1;

    // Interior clutter: wall segments and small furniture blocks, each
    // accepted only if free space stays 4-connected.
    int blocked = 0;
    const int max_tries = 50 * target_blocked + 50;
    for (int tries = 0; blocked < target_blocked && tries < max_tries; ++tries) {
      std::vector<int> cells;
      const int x0 = 1 + static_cast<int>(uniform_index(rng, w - 2));
      const int y0 = 1 + static_cast<int>(uniform_index(rng, h - 2));
      if (uniform_real(rng) < 0.6) {
        const int max_len = std::max(2, std::min(w, h) / 2);
        const int len = 2 + static_cast<int>(uniform_index(rng, max_len - 1));
        const bool horizontal = uniform_index(rng, 2) == 0;
        for (int k = 0; k < len; ++k) {
          const int x = horizontal ? x0 + k : x0;
          const int y = horizontal ? y0 : y0 + k;
          if (x < w - 1 && y < h - 1) cells.push_back(y * w + x);
        }
      } else {
        const int bw = 1 + static_cast<int>(uniform_index(rng, 2));
        const int bh = 1 + static_cast<int>(uniform_index(rng, 2));
        for (int dy = 0; dy < bh; ++dy)
          for (int dx = 0; dx < bw; ++dx)
            if (x0 + dx < w - 1 && y0 + dy < h - 1) cells.push_back((y0 + dy) * w + x0 + dx);
      }
      std::vector<int> fresh;
      for (int c : cells)
        if (occ[c] == 0) fresh.push_back(c);
      if (fresh.empty() || blocked + static_cast<int>(fresh.size()) > target_blocked) continue;
      for (int c : fresh) occ[c] = 1;
      if (detail::free_space_connected(occ, w, h)) {
        blocked += static_cast<int>(fresh.size());
      } else {
        for (int c : fresh) occ[c] = 0;
      }
    }
    if (blocked < target_blocked) continue;

    GridScene s;
    s.scene_id = "scene_" + std::to_string(seed);
    s.seed = seed;
    s.width = w;
    s.height = h;
    s.occupancy = std::move(occ);
    const auto free = s.free_cells();

    // Objects gather in clusters seeded next to walls and furniture.
    std::vector<Cell> anchors;
    for (const auto& c : free)
      if (detail::blocked_neighbours8(s, c.x, c.y) > 0) anchors.push_back(c);
    if (anchors.empty()) anchors = free;
    const int n_clusters = std::max(1, (p.num_objects + 3) / 4);
    std::vector<Cell> centers;
    for (int k = 0; k < n_clusters; ++k) centers.push_back(anchors[uniform_index(rng, anchors.size())]);

    std::vector<std::uint8_t> has_object(s.occupancy.size(), 0);
    for (int i = 0; i < p.num_objects; ++i) {
      const Cell center = centers[static_cast<std::size_t>(i % n_clusters)];
      std::vector<Cell> options;
      for (int radius = 2; options.empty(); ++radius) {
        for (const auto& c : free) {
          if (has_object[s.index(c.x, c.y)]) continue;
          if (std::max(std::abs(c.x - center.x), std::abs(c.y - center.y)) <= radius) options.push_back(c);
        }
      }
      const Cell pos = options[uniform_index(rng, options.size())];
      has_object[s.index(pos.x, pos.y)] = 1;
      SceneObject obj;
      obj.object_id = i;
      obj.class_id = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(p.num_classes)));
      obj.position = pos;
      obj.base_confidence = uniform_real(rng, 0.5, 1.0);
      s.objects.push_back(obj);
    }

    // Keypoints sit on wall faces first (corners and edges are where a
    // feature detector fires), then anywhere free.
    std::vector<Cell> faces;
    std::vector<Cell> open;
    for (const auto& c : free) (detail::blocked_neighbours4(s, c.x, c.y) > 0 ? faces : open).push_back(c);
    detail::shuffle(faces, rng);
    detail::shuffle(open, rng);
    faces.insert(faces.end(), open.begin(), open.end());
    for (int i = 0; i < p.num_keypoints; ++i) s.keypoints.push_back({i, faces[static_cast<std::size_t>(i)]});

    s.semantic_field = compute_semantic_field(s);
    return s;
  }
  throw GenerationInfeasible("could not reach wall density " + std::to_string(p.wall_density) +
                             " with connected free space after " + std::to_string(kGenerationAttempts) +
                             " attempts");
}

/// Returns the list of violated scene invariants; empty means valid.
inline std::vector<std::string> validate_scene(const GridScene& s) {
  std::vector<std::string> errs;
  if (s.width < 8 || s.height < 8) errs.push_back("grid smaller than 8x8");
  const auto n = static_cast<std::size_t>(std::max(0, s.width) * std::max(0, s.height));
  if (s.occupancy.size() != n) {
    errs.push_back("occupancy size mismatch");
    return errs;
  }
  if (s.semantic_field.size() != n) errs.push_back("semantic_field size mismatch");
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if ((x == 0 || y == 0 || x == s.width - 1 || y == s.height - 1) && !s.blocked(x, y))
        errs.push_back("border cell (" + std::to_string(x) + "," + std::to_string(y) + ") is free");
  for (double v : s.semantic_field)
    if (!(v >= -1.0 && v <= 1.0)) {
      errs.push_back("semantic_field value out of [-1, 1]");
      break;
    }
  std::vector<int> ids;
  for (const auto& o : s.objects) {
    if (s.blocked(o.position)) errs.push_back("object " + std::to_string(o.object_id) + " on blocked cell");
    if (!(o.base_confidence > 0.0 && o.base_confidence <= 1.0))
      errs.push_back("object " + std::to_string(o.object_id) + " confidence out of (0, 1]");
    if (o.class_id < 0) errs.push_back("object " + std::to_string(o.object_id) + " has negative class");
    ids.push_back(o.object_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) errs.push_back("duplicate object_id");
  ids.clear();
  for (const auto& k : s.keypoints) {
    if (s.blocked(k.position)) errs.push_back("keypoint " + std::to_string(k.keypoint_id) + " on blocked cell");
    ids.push_back(k.keypoint_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) errs.push_back("duplicate keypoint_id");
  if (!detail::free_space_connected(s.occupancy, s.width, s.height))
    errs.push_back("free cells missing or not 4-connected");
  return errs;
}

// ---------------------------------------------------------------------------
// Geometry

namespace detail {

// Unit direction for a compass angle in degrees (clockwise from north).
inline std::pair<double, double> compass_direction(double deg) {
  const double rad = deg * std::numbers::pi / 180.0;
  return {std::sin(rad), -std::cos(rad)};
}

}  // namespace detail

/// Normalized distance along one ray, measured from the agent cell centre to
/// the face of the first blocked cell plus half a cell (an adjacent wall
/// reads 1.0 cell). Clipped to 1.
inline double cast_ray(const GridScene& s, const AgentPose& pose, double angle_deg, double max_range) {
  const auto [dx, dy] = detail::compass_direction(angle_deg);
  int cx = pose.x;
  int cy = pose.y;
  const double inf = std::numeric_limits<double>::infinity();
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  const double delta_x = dx != 0 ? 1.0 / std::abs(dx) : inf;
  const double delta_y = dy != 0 ? 1.0 / std::abs(dy) : inf;
  double t_x = 0.5 * delta_x;
  double t_y = 0.5 * delta_y;
  while (true) {
    double t;
    if (t_x < t_y) {
      t = t_x;
      cx += step_x;
      t_x += delta_x;
    } else {
      t = t_y;
      cy += step_y;
      t_y += delta_y;
    }
    const double dist = t + 0.5;
    if (dist >= max_range) return 1.0;
    if (s.blocked(cx, cy)) return dist / max_range;
  }
}

/// Rays evenly spaced across the field of view, ordered left to right.
inline std::vector<double> raycast_depth(const GridScene& s, const AgentPose& pose, const SensorParams& sensor) {
  if (sensor.n_rays < 1) throw std::invalid_argument("n_rays must be >= 1");
  std::vector<double> depth(static_cast<std::size_t>(sensor.n_rays));
  const double left = degrees(pose.heading) - sensor.fov_deg / 2.0;
  const double spacing = sensor.fov_deg / sensor.n_rays;
  for (int i = 0; i < sensor.n_rays; ++i) {
    depth[static_cast<std::size_t>(i)] = cast_ray(s, pose, left + (i + 0.5) * spacing, sensor.max_range);
  }
  return depth;
}

/// Bresenham-style traversal between cell centres. Intermediate cells must be
/// free; where the line passes exactly between two cells both must be free.
inline bool line_of_sight(const GridScene& s, Cell from, Cell to) {
  const int dx = to.x - from.x;
  const int dy = to.y - from.y;
  const int n = std::max(std::abs(dx), std::abs(dy));
  const bool x_major = std::abs(dx) >= std::abs(dy);
  const int major_sign = x_major ? (dx > 0 ? 1 : -1) : (dy > 0 ? 1 : -1);
  const int minor_delta = x_major ? dy : dx;
  for (int i = 1; i < n; ++i) {
    const int num = minor_delta * i;
    int q = num / n;
    int r = num % n;
    if (r < 0) {
      q -= 1;
      r += n;
    }
    const int major = (x_major ? from.x : from.y) + major_sign * i;
    const int minor_base = (x_major ? from.y : from.x) + q;
    auto cell = [&](int minor) { return x_major ? Cell{major, minor} : Cell{minor, major}; };
    if (2 * r < n) {
      if (s.blocked(cell(minor_base))) return false;
    } else if (2 * r > n) {
      if (s.blocked(cell(minor_base + 1))) return false;
    } else if (s.blocked(cell(minor_base)) || s.blocked(cell(minor_base + 1))) {
      return false;
    }
  }
  return true;
}

/// Whether a cell lies in the view cone and range (ignores occlusion). The
/// agent's own cell is always in view.
inline bool in_view_cone(const AgentPose& pose, Cell c, const SensorParams& sensor) {
  const int vx = c.x - pose.x;
  const int vy = c.y - pose.y;
  if (vx == 0 && vy == 0) return true;
  const double d = std::sqrt(double(vx * vx + vy * vy));
  if (d > sensor.max_range) return false;
  const Cell f = heading_step(pose.heading);
  const double dot = vx * f.x + vy * f.y;
  return dot >= d * std::cos(sensor.fov_deg / 2.0 * std::numbers::pi / 180.0) - 1e-9;
}

inline double cell_distance(const AgentPose& pose, Cell c) {
  const double dx = c.x - pose.x;
  const double dy = c.y - pose.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct VisibleObject {
  int object_id = 0;
  int class_id = 0;
  double confidence = 0.0;
};

struct VisibleSet {
  std::vector<int> keypoints;  // keypoint ids, scene order
  std::vector<VisibleObject> objects;
};

inline bool cell_visible(const GridScene& s, const AgentPose& pose, Cell c, const SensorParams& sensor) {
  return in_view_cone(pose, c, sensor) && line_of_sight(s, {pose.x, pose.y}, c);
}

inline VisibleSet visible_set(const GridScene& s, const AgentPose& pose, const SensorParams& sensor) {
  VisibleSet out;
  for (const auto& k : s.keypoints)
    if (cell_visible(s, pose, k.position, sensor)) out.keypoints.push_back(k.keypoint_id);
  for (const auto& o : s.objects) {
    if (!cell_visible(s, pose, o.position, sensor)) continue;
    const double atten = 1.0 - cell_distance(pose, o.position) / sensor.max_range;
    out.objects.push_back({o.object_id, o.class_id, std::clamp(o.base_confidence * atten, 0.05, 1.0)});
  }
  return out;
}

struct StepResult {
  AgentPose pose;
  bool collided = false;
};

inline StepResult step_pose(const GridScene& s, const AgentPose& pose, DiscreteAction action) {
  switch (action) {
    case DiscreteAction::RotateLeft:
      return {{pose.x, pose.y, heading_from_degrees(degrees(pose.heading) - 90)}, false};
    case DiscreteAction::RotateRight:
      return {{pose.x, pose.y, heading_from_degrees(degrees(pose.heading) + 90)}, false};
    case DiscreteAction::MoveForward: {
      const Cell d = heading_step(pose.heading);
      if (s.blocked(pose.x + d.x, pose.y + d.y)) return {pose, true};
      return {{pose.x + d.x, pose.y + d.y, pose.heading}, false};
    }
    case DiscreteAction::VlmQuery:
      return {pose, false};
  }
  return {pose, false};
}

}  // namespace semex
