#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "semex/errors.hpp"
#include "semex/scene.hpp"

namespace semex {

inline nlohmann::json scene_to_json(const GridScene& s) {
  nlohmann::json j;
  j["scene_id"] = s.scene_id;
  j["seed"] = s.seed;
  j["width"] = s.width;
  j["height"] = s.height;
  auto& occ = j["occupancy"] = nlohmann::json::array();
  for (auto v : s.occupancy) occ.push_back(static_cast<int>(v));
  auto& objs = j["objects"] = nlohmann::json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"id", o.object_id}, {"class_id", o.class_id}, {"x", o.position.x}, {"y", o.position.y},
                    {"base_confidence", o.base_confidence}});
  auto& kps = j["keypoints"] = nlohmann::json::array();
  for (const auto& k : s.keypoints) kps.push_back({{"id", k.keypoint_id}, {"x", k.position.x}, {"y", k.position.y}});
  j["semantic_field"] = s.semantic_field;
  return j;
}

/// Parses a scene document and checks every scene invariant.
inline GridScene scene_from_json(const nlohmann::json& j) {
  GridScene s;
  try {
    s.scene_id = j.at("scene_id").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& v : j.at("occupancy")) {
      const int b = v.get<int>();
      if (b != 0 && b != 1) throw ConfigError("occupancy entries must be 0 or 1");
      s.occupancy.push_back(static_cast<std::uint8_t>(b));
    }
    for (const auto& o : j.at("objects"))
      s.objects.push_back({o.at("id").get<int>(), o.at("class_id").get<int>(),
                           {o.at("x").get<int>(), o.at("y").get<int>()}, o.at("base_confidence").get<double>()});
    for (const auto& k : j.at("keypoints"))
      s.keypoints.push_back({k.at("id").get<int>(), {k.at("x").get<int>(), k.at("y").get<int>()}});
    s.semantic_field = j.at("semantic_field").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scene document: ") + e.what());
  }
  const auto errs = validate_scene(s);
  if (!errs.empty()) throw ConfigError("invalid scene '" + s.scene_id + "': " + errs.front());
  return s;
}

inline void save_scene(const GridScene& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << scene_to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline GridScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return scene_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace semex
