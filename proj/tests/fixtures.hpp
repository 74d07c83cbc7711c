#pragma once
// Hand-built scenes and scratch directories shared by the unit tests.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "semex/semex.hpp"

namespace fixture {

/// Walled room with the given interior cells blocked. No objects or
/// keypoints; semantic field computed.
inline semex::GridScene room(int w, int h, std::initializer_list<semex::Cell> walls = {}) {
  semex::GridScene s;
  s.scene_id = "room";
  s.width = w;
  s.height = h;
  s.occupancy.assign(static_cast<std::size_t>(w * h), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) s.occupancy[s.index(x, y)] = 1;
  for (auto c : walls) s.occupancy[s.index(c.x, c.y)] = 1;
  s.semantic_field = semex::compute_semantic_field(s);
  return s;
}

inline void add_object(semex::GridScene& s, semex::Cell at, int class_id, double conf = 1.0) {
  s.objects.push_back({static_cast<int>(s.objects.size()), class_id, at, conf});
  s.semantic_field = semex::compute_semantic_field(s);
}

inline void add_keypoint(semex::GridScene& s, semex::Cell at) {
  s.keypoints.push_back({static_cast<int>(s.keypoints.size()), at});
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("semex_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

/// Small, quick agent settings for a sensor with `n_rays` rays.
inline semex::AgentConfig small_agent(int n_rays) {
  semex::AgentConfig c;
  c.state_size = n_rays + semex::kContextFeatures;
  c.actor_hidden = {16, 16};
  c.critic_hidden = {16, 16};
  c.batch_size = 8;
  c.warmup_steps = 16;
  c.buffer_capacity = 2000;
  return c;
}

/// Three-phase run over small nets and short episodes.
inline semex::RunConfig small_run(std::uint64_t seed, int episodes, int steps, int phases = 3) {
  semex::RunConfig c;
  c.seed = seed;
  c.sensor.n_rays = 16;
  c.agent = small_agent(c.sensor.n_rays);
  for (int p = 1; p <= phases; ++p) {
    semex::PhaseConfig pc;
    pc.phase_id = p;
    pc.weights = semex::phase_weights(p);
    pc.episodes = episodes;
    pc.max_steps_per_episode = steps;
    pc.scene_pool = {std::uint64_t{11}, std::uint64_t{12}};
    c.phases.push_back(pc);
  }
  return c;
}

}  // namespace fixture
