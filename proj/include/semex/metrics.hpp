#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "semex/episode.hpp"
#include "semex/errors.hpp"

namespace semex {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct ReportRow {
  std::string scene_id;
  int phase = 0;
  double max_pl = 0.0;
  std::int64_t tdo = 0;
  double tcs = 0.0;
  double mc = 0.0;
  std::int64_t tdc = 0;
  std::int64_t queries = 0;
  std::int64_t collisions = 0;
  std::int64_t episodes = 0;
};

struct EvalReport {
  int phase = 0;
  std::vector<ReportRow> scenes;
  std::optional<ReportRow> aggregate;  // absent when there are no scenes
  double max_pl_global = 0.0;
};

inline constexpr const char* kReportCsvHeader = "scene_id,phase,max_pl,tdo,tcs,mc,tdc,queries,collisions,episodes";

inline double mean_confidence(double tcs, std::int64_t tdo) { return tdo > 0 ? tcs / static_cast<double>(tdo) : 0.0; }

/// Folds episodes into per-scene rows (first-appearance order) and the
/// aggregate. The aggregate Max PL is the mean of per-scene maxima.
inline EvalReport build_report(std::span<const EpisodeResult> episodes, int phase) {
  EvalReport rep;
  rep.phase = phase;
  std::map<std::string, std::size_t> row_of;
  for (const auto& ep : episodes) {
    auto [it, inserted] = row_of.try_emplace(ep.scene_id, rep.scenes.size());
    if (inserted) rep.scenes.push_back({ep.scene_id, phase});
    auto& row = rep.scenes[it->second];
    const auto& m = ep.metrics;
    row.max_pl = std::max(row.max_pl, m.path_length);
    row.tdo += m.tdo;
    row.tcs += m.tcs;
    row.tdc += m.detector_calls;
    row.queries += m.queries;
    row.collisions += m.collisions;
    ++row.episodes;
  }
  if (rep.scenes.empty()) return rep;
  ReportRow agg{"ALL", phase};
  for (auto& row : rep.scenes) {
    row.mc = mean_confidence(row.tcs, row.tdo);
    agg.max_pl += row.max_pl;
    agg.tdo += row.tdo;
    agg.tcs += row.tcs;
    agg.tdc += row.tdc;
    agg.queries += row.queries;
    agg.collisions += row.collisions;
    agg.episodes += row.episodes;
    rep.max_pl_global = std::max(rep.max_pl_global, row.max_pl);
  }
  agg.max_pl /= static_cast<double>(rep.scenes.size());
  agg.mc = mean_confidence(agg.tcs, agg.tdo);
  rep.aggregate = agg;
  return rep;
}

struct EvalOptions {
  int max_steps = 200;
  SensorParams sensor;
  RewardWeights weights;  // only shapes the logged rewards
  int workers = 1;
  SemanticOracle semantic;
};

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeResult> episodes;  // scene-major, then episode index
};

/// Frozen policy, no exploration noise. Episode (s, e) draws from its own
/// seed stream, so results do not depend on worker scheduling.
inline EvalResult evaluate(const DdpgAgent& agent, int phase, std::span<const GridScene> scenes,
                           int episodes_per_scene, std::uint64_t seed, const EvalOptions& opt) {
  if (scenes.empty()) throw std::invalid_argument("evaluation needs at least one scene");
  if (episodes_per_scene < 0) throw std::invalid_argument("episodes_per_scene must be >= 0");
  const int expected = opt.sensor.n_rays + kContextFeatures;
  if (agent.config.state_size != expected || agent.actor.input_dim() != expected)
    throw ConfigError("checkpoint state size " + std::to_string(agent.config.state_size) +
                      " does not match the observation size " + std::to_string(expected) + " (" +
                      std::to_string(opt.sensor.n_rays) + " rays + " + std::to_string(kContextFeatures) +
                      " context features)");

  const std::size_t total = scenes.size() * static_cast<std::size_t>(episodes_per_scene);
  std::vector<EpisodeResult> results(total);
  EpisodeOptions eo;
  eo.max_steps = opt.max_steps;
  eo.explore = false;
  eo.sensor = opt.sensor;
  eo.semantic = opt.semantic;

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      const std::size_t s = job / static_cast<std::size_t>(episodes_per_scene);
      const int e = static_cast<int>(job % static_cast<std::size_t>(episodes_per_scene));
      Rng rng(derive_seed(seed, s * 1000003ULL + static_cast<std::uint64_t>(e)));
      results[job] = rollout(agent, scenes[s], opt.weights, rng, eo);
      results[job].episode = e;
    }
  };
  const int workers = std::max(1, std::min<int>(opt.workers, static_cast<int>(std::max<std::size_t>(total, 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  EvalResult out;
  out.report = build_report(results, phase);
  if (out.report.scenes.empty()) {
    // Zero episodes still yields one empty row per scene.
    for (const auto& sc : scenes) out.report.scenes.push_back({sc.scene_id, phase});
    out.report = EvalReport{phase, out.report.scenes, ReportRow{"ALL", phase}, 0.0};
  }
  out.episodes = std::move(results);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string report_row_csv(const ReportRow& r) {
  std::ostringstream os;
  os << r.scene_id << ',' << r.phase << ',' << format_double(r.max_pl) << ',' << r.tdo << ','
     << format_double(r.tcs) << ',' << format_double(r.mc) << ',' << r.tdc << ',' << r.queries << ','
     << r.collisions << ',' << r.episodes;
  return os.str();
}

inline void write_report_csv(const EvalReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kReportCsvHeader << '\n';
  for (const auto& r : rep.scenes) out << report_row_csv(r) << '\n';
  if (rep.aggregate) out << report_row_csv(*rep.aggregate) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Trajectory JSONL: one header line, then one object per step.

inline nlohmann::json trajectory_header(const EpisodeResult& ep, const GridScene& scene, int phase) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects) objs.push_back({{"x", o.position.x}, {"y", o.position.y}, {"class_id", o.class_id}});
  std::vector<int> occ(scene.occupancy.begin(), scene.occupancy.end());
  return {{"kind", "header"},
          {"scene_id", ep.scene_id},
          {"episode", ep.episode},
          {"phase", phase},
          {"width", scene.width},
          {"height", scene.height},
          {"occupancy", occ},
          {"objects", objs},
          {"start", {{"x", ep.start.x}, {"y", ep.start.y}, {"heading", degrees(ep.start.heading)}}}};
}

inline nlohmann::json step_to_json(const StepRecord& s) {
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : s.detections) dets.push_back({{"class_id", d.class_id}, {"confidence", d.confidence}});
  return {{"t", s.t},
          {"action", std::string(to_string(s.action))},
          {"collided", s.collided},
          {"r_geom", s.reward.r_geom},
          {"r_obj", s.reward.r_obj},
          {"r_sem", s.reward.r_sem},
          {"penalty", s.reward.penalty},
          {"total", s.reward.total},
          {"x", s.pose.x},
          {"y", s.pose.y},
          {"heading", degrees(s.pose.heading)},
          {"detections", dets},
          {"semantic_score", s.semantic_score ? nlohmann::json(*s.semantic_score) : nlohmann::json(nullptr)}};
}

inline void write_trajectory_jsonl(const EpisodeResult& ep, const GridScene& scene, int phase,
                                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << trajectory_header(ep, scene, phase).dump() << '\n';
  for (const auto& s : ep.steps) out << step_to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

/// Minimal view of an episode needed for plotting.
struct TrajectoryView {
  int width = 0;
  int height = 0;
  std::vector<int> occupancy;
  std::vector<Cell> objects;
  AgentPose start;
  std::vector<DiscreteAction> actions;
  std::vector<bool> collided;
  std::vector<Cell> positions;  // after each step
};

inline TrajectoryView make_view(const EpisodeResult& ep, const GridScene& scene) {
  TrajectoryView v;
  v.width = scene.width;
  v.height = scene.height;
  v.occupancy.assign(scene.occupancy.begin(), scene.occupancy.end());
  for (const auto& o : scene.objects) v.objects.push_back(o.position);
  v.start = ep.start;
  for (const auto& s : ep.steps) {
    v.actions.push_back(s.action);
    v.collided.push_back(s.collided);
    v.positions.push_back({s.pose.x, s.pose.y});
  }
  return v;
}

struct ParsedTrajectory {
  TrajectoryView view;
  std::size_t malformed_lines = 0;
  bool has_header = false;
};

/// Reads a trajectory file; malformed step lines are counted and skipped.
inline ParsedTrajectory read_trajectory_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  ParsedTrajectory p;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.value("kind", "") == "header") {
        p.view.width = j.at("width").get<int>();
        p.view.height = j.at("height").get<int>();
        p.view.occupancy = j.at("occupancy").get<std::vector<int>>();
        for (const auto& o : j.at("objects")) p.view.objects.push_back({o.at("x").get<int>(), o.at("y").get<int>()});
        const auto& st = j.at("start");
        p.view.start = {st.at("x").get<int>(), st.at("y").get<int>(), heading_from_degrees(st.at("heading").get<int>())};
        p.has_header = true;
        continue;
      }
      const auto action = parse_action(j.at("action").get<std::string>());
      const bool collided = j.at("collided").get<bool>();
      const Cell pos{j.at("x").get<int>(), j.at("y").get<int>()};
      p.view.actions.push_back(action);
      p.view.collided.push_back(collided);
      p.view.positions.push_back(pos);
    } catch (const std::exception&) {
      ++p.malformed_lines;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// SVG (presentation only)

inline std::string render_svg(const TrajectoryView& v) {
  constexpr int kCell = 20;
  auto centre = [](int c) { return c * kCell + kCell / 2; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << v.width * kCell << "\" height=\""
     << v.height * kCell << "\" viewBox=\"0 0 " << v.width * kCell << ' ' << v.height * kCell << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x) {
      const auto i = static_cast<std::size_t>(y * v.width + x);
      if (i < v.occupancy.size() && v.occupancy[i])
        os << "<rect x=\"" << x * kCell << "\" y=\"" << y * kCell << "\" width=\"" << kCell << "\" height=\"" << kCell
           << "\" fill=\"#888888\"/>\n";
    }
  for (const auto& o : v.objects)
    os << "<circle class=\"object\" cx=\"" << centre(o.x) << "\" cy=\"" << centre(o.y)
       << "\" r=\"5\" fill=\"#2a7de1\"/>\n";

  // One vertex for the start, one per successful forward move.
  os << "<polyline class=\"path\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\" points=\"" << centre(v.start.x)
     << ',' << centre(v.start.y);
  for (std::size_t i = 0; i < v.actions.size(); ++i)
    if (v.actions[i] == DiscreteAction::MoveForward && !v.collided[i])
      os << ' ' << centre(v.positions[i].x) << ',' << centre(v.positions[i].y);
  os << "\"/>\n";
  for (std::size_t i = 0; i < v.actions.size(); ++i)
    if (v.actions[i] == DiscreteAction::VlmQuery) {
      const int cx = centre(v.positions[i].x);
      const int cy = centre(v.positions[i].y);
      os << "<polygon class=\"query\" points=\"" << cx << ',' << cy - 6 << ' ' << cx + 6 << ',' << cy << ' ' << cx
         << ',' << cy + 6 << ' ' << cx - 6 << ',' << cy << "\" fill=\"#ff9900\" fill-opacity=\"0.6\"/>\n";
    }
  os << "<rect class=\"start\" x=\"" << centre(v.start.x) - 4 << "\" y=\"" << centre(v.start.y) - 4
     << "\" width=\"8\" height=\"8\" fill=\"#2ca02c\"/>\n";
  os << "</svg>\n";
  return os.str();
}

inline void write_svg(const TrajectoryView& v, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << render_svg(v);
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string episode_stem(const std::string& scene_id, int episode) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", episode);
  return scene_id + "_ep" + buf;
}

/// Writes metrics.csv, summary.json, trajectories/*.jsonl and plots/*.svg.
/// `scenes` must contain every scene referenced by `episodes`.
inline void export_report(const EvalReport& rep, std::span<const EpisodeResult> episodes,
                          std::span<const GridScene> scenes, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "trajectories", ec);
  fs::create_directories(out_dir / "plots", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_report_csv(rep, out_dir / "metrics.csv");

  nlohmann::json summary = {{"phase", rep.phase},
                            {"scenes", rep.scenes.size()},
                            {"max_pl_mean_of_scene_maxima", rep.aggregate ? rep.aggregate->max_pl : 0.0},
                            {"max_pl_global", rep.max_pl_global}};
  std::ofstream js(out_dir / "summary.json");
  if (!js) throw IoError("cannot write " + (out_dir / "summary.json").string());
  js << summary.dump(2) << '\n';

  std::map<std::string, const GridScene*> by_id;
  for (const auto& s : scenes) by_id[s.scene_id] = &s;
  for (const auto& ep : episodes) {
    const auto it = by_id.find(ep.scene_id);
    if (it == by_id.end()) throw std::invalid_argument("episode references unknown scene " + ep.scene_id);
    const std::string stem = episode_stem(ep.scene_id, ep.episode);
    write_trajectory_jsonl(ep, *it->second, rep.phase, out_dir / "trajectories" / (stem + ".jsonl"));
    write_svg(make_view(ep, *it->second), out_dir / "plots" / (stem + ".svg"));
  }
}

}  // namespace semex
