// Command-line front end: gen-scenes | train | eval | plot.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semex/semex.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

semex::SceneParams load_scene_params(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw semex::ConfigError("cannot open params file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw semex::ConfigError(path.string() + ": " + e.what());
  }
  // Reuse the run-config parser for the scene_params block.
  nlohmann::json wrapper = {{"scene_params", j}, {"phases", {{{"phase_id", 1}, {"episodes", 1}, {"scene_pool", {0}}}}}};
  return semex::run_config_from_json(wrapper).scene_params;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

int gen_scenes(int count, std::uint64_t seed, const fs::path& params_file, const fs::path& out_dir) {
  const auto params = load_scene_params(params_file);
  if (count < 0) throw semex::ConfigError("--count must be >= 0");
  fs::create_directories(out_dir);
  int failures = 0;
  std::cout << "# manifest seed=" << seed << " count=" << count << '\n';
  for (int i = 0; i < count; ++i) {
    const std::string stem = "scene_" + std::to_string(seed) + "_" + std::to_string(i);
    try {
      auto scene = semex::generate_scene(semex::derive_seed(seed, static_cast<std::uint64_t>(i)), params);
      scene.scene_id = stem;
      semex::save_scene(scene, out_dir / (stem + ".json"));
      std::cout << stem << ".json objects=" << scene.objects.size() << " keypoints=" << scene.keypoints.size()
                << '\n';
    } catch (const semex::GenerationInfeasible& e) {
      std::cerr << stem << ": generation infeasible: " << e.what() << '\n';
      ++failures;
    }
  }
  return failures ? kExitUsage : 0;
}

int train(const fs::path& config_file, const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  auto config = semex::load_run_config(config_file);
  if (seed) config.seed = *seed;
  semex::CurriculumOptions opt;
  opt.progress = &std::cout;
  const auto result = semex::run_curriculum(config, out_dir, opt);
  for (const auto& p : result.phases)
    std::cout << "phase " << p.phase_id << " checkpoint " << p.checkpoint.string() << " metrics "
              << p.metrics.string() << '\n';
  return 0;
}

int eval(const fs::path& checkpoint_file, const fs::path& scenes_dir, int episodes, std::uint64_t seed,
         const fs::path& out_dir, int max_steps, int workers, std::optional<int> n_rays) {
  const auto cp = semex::load_checkpoint(checkpoint_file);
  semex::EvalOptions opt;
  opt.max_steps = max_steps;
  opt.workers = workers;
  if (cp.extra.contains("sensor")) {
    const auto& s = cp.extra["sensor"];
    opt.sensor.n_rays = s.value("n_rays", opt.sensor.n_rays);
    opt.sensor.max_range = s.value("max_range", opt.sensor.max_range);
    opt.sensor.fov_deg = s.value("fov_deg", opt.sensor.fov_deg);
  }
  if (n_rays) opt.sensor.n_rays = *n_rays;
  if (cp.extra.contains("weights")) {
    const auto& w = cp.extra["weights"];
    opt.weights.alpha = w.value("alpha", opt.weights.alpha);
    opt.weights.beta = w.value("beta", opt.weights.beta);
    opt.weights.delta = w.value("delta", opt.weights.delta);
    opt.weights.collision_penalty = w.value("collision_penalty", opt.weights.collision_penalty);
    opt.weights.max_new_objects = w.value("max_new_objects", opt.weights.max_new_objects);
    opt.weights.query_penalty = w.value("query_penalty", opt.weights.query_penalty);
  }
  std::vector<semex::GridScene> scenes;
  for (const auto& f : sorted_files(scenes_dir, ".json")) scenes.push_back(semex::load_scene(f));
  if (scenes.empty()) throw semex::ConfigError("no scene files in " + scenes_dir.string());
  if (episodes < 1) throw semex::ConfigError("--episodes must be >= 1");

  const auto result = semex::evaluate(cp.agent, cp.phase_id, scenes, episodes, seed, opt);
  semex::export_report(result.report, result.episodes, scenes, out_dir);
  std::cout << semex::kReportCsvHeader << '\n';
  for (const auto& r : result.report.scenes) std::cout << semex::report_row_csv(r) << '\n';
  if (result.report.aggregate) std::cout << semex::report_row_csv(*result.report.aggregate) << '\n';
  return 0;
}

int plot(const fs::path& traj_dir, const fs::path& out_dir) {
  const auto files = sorted_files(traj_dir, ".jsonl");
  if (files.empty()) {
    std::cerr << "no trajectories in " << traj_dir.string() << '\n';
    return kExitUsage;
  }
  fs::create_directories(out_dir);
  int written = 0;
  for (const auto& f : files) {
    const auto parsed = semex::read_trajectory_jsonl(f);
    if (parsed.malformed_lines > 0)
      std::cerr << "warning: " << f.string() << ": skipped " << parsed.malformed_lines << " malformed line(s)\n";
    if (!parsed.has_header) {
      std::cerr << "warning: " << f.string() << ": no header line, skipped\n";
      continue;
    }
    semex::write_svg(parsed.view, out_dir / (f.stem().string() + ".svg"));
    ++written;
  }
  std::cout << "wrote " << written << " plot(s) to " << out_dir.string() << '\n';
  return written > 0 ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered-reward semantic exploration: scenes, curriculum training, evaluation, plots"};
  app.require_subcommand(1);

  int count = 0;
  std::uint64_t seed = 0;
  fs::path params_file, out_dir, config_file, checkpoint_file, scenes_dir, traj_dir;
  int episodes = 1;
  int max_steps = 200;
  int workers = 1;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> n_rays;

  auto* gen = app.add_subcommand("gen-scenes", "Generate procedural scene files");
  gen->add_option("--count", count, "Number of scenes")->required();
  gen->add_option("--seed", seed, "Base seed")->required();
  gen->add_option("--params", params_file, "Scene parameter JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Run the curriculum");
  tr->add_option("--config", config_file, "Run config JSON")->required();
  tr->add_option("--out", out_dir, "Output directory")->required();
  tr->add_option("--seed", train_seed, "Override the config seed");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint_file, "Agent checkpoint JSON")->required();
  ev->add_option("--scenes", scenes_dir, "Directory of scene JSON files")->required();
  ev->add_option("--episodes", episodes, "Episodes per scene")->required();
  ev->add_option("--seed", seed, "Evaluation seed")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--max-steps", max_steps, "Steps per episode");
  ev->add_option("--workers", workers, "Parallel rollout workers");
  ev->add_option("--n-rays", n_rays, "Override the sensor ray count");

  auto* pl = app.add_subcommand("plot", "Render SVGs from trajectory logs");
  pl->add_option("--trajectories", traj_dir, "Directory of trajectory JSONL files")->required();
  pl->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return gen_scenes(count, seed, params_file, out_dir);
    if (*tr) return train(config_file, out_dir, train_seed);
    if (*ev) return eval(checkpoint_file, scenes_dir, episodes, seed, out_dir, max_steps, workers, n_rays);
    if (*pl) return plot(traj_dir, out_dir);
  } catch (const semex::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
