#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "semex/semex.hpp"

using namespace semex;
namespace fs = std::filesystem;

namespace {

EpisodeOptions small_options(int steps) {
  EpisodeOptions o;
  o.max_steps = steps;
  o.sensor.n_rays = 16;
  return o;
}

// Random scripted policy that queries often.
DiscreteAction random_policy(const Eigen::VectorXd&, Rng& rng) {
  return kAllActions[uniform_index(rng, kNumActions)];
}

nlohmann::json minimal_config() {
  return {{"seed", 3},
          {"sensor", {{"n_rays", 16}}},
          {"agent", {{"actor_hidden", {8}}, {"critic_hidden", {8}}, {"batch_size", 4}, {"warmup_steps", 8}}},
          {"phases", {{{"phase_id", 1}, {"episodes", 1}, {"max_steps_per_episode", 10}, {"scene_pool", {5}}}}}};
}

}  // namespace

TEST(Curriculum, ZeroStepEpisodeIsEmpty) {
  DdpgAgent ag(fixture::small_agent(16), 1);
  Rng rng(1);
  const auto s = generate_scene(1, SceneParams{});
  const auto r = run_episode(ag, s, phase_weights(1), rng, small_options(0));
  EXPECT_TRUE(r.steps.empty());
  EXPECT_EQ(r.metrics.steps, 0);
  EXPECT_EQ(r.metrics.path_length, 0.0);
  EXPECT_EQ(r.metrics.tdo, 0);
  EXPECT_EQ(r.metrics.detector_calls, 0);
  EXPECT_EQ(r.metrics.total_reward, 0.0);
}

TEST(Curriculum, RotatingPolicyNeverMovesOrCollides) {
  DdpgAgent ag(fixture::small_agent(16), 1);
  Rng rng(2);
  auto opt = small_options(40);
  opt.scripted = [](const Eigen::VectorXd&, Rng&) { return DiscreteAction::RotateLeft; };
  const auto r = run_episode(ag, generate_scene(2, SceneParams{}), phase_weights(1), rng, opt);
  EXPECT_EQ(r.metrics.path_length, 0.0);
  EXPECT_EQ(r.metrics.collisions, 0);
  EXPECT_EQ(r.metrics.steps, 40);
  EXPECT_EQ(r.metrics.detector_calls, 40);
  for (const auto& st : r.steps) {
    EXPECT_EQ(st.pose.x, r.start.x);
    EXPECT_EQ(st.pose.y, r.start.y);
  }
}

TEST(Curriculum, LoggedStepsReplayToTheSameRewards) {
  DdpgAgent ag(fixture::small_agent(16), 3);
  const auto scene = generate_scene(4, SceneParams{});
  const auto w = phase_weights(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto opt = small_options(60);
    opt.scripted = random_policy;
    const auto r = run_episode(ag, scene, w, rng, opt);
    EpisodeMemory mem;
    double total = 0.0;
    for (const auto& st : r.steps) {
      LayerInputs in;
      if (!st.collided) {
        const auto vis = visible_set(scene, st.pose, opt.sensor);
        in.r_geom = geometric_reward(mem, vis.keypoints);
        in.r_obj = object_reward(mem, st.detections, w.max_new_objects);
      }
      if (st.semantic_score) in.r_sem = discretize_semantic({*st.semantic_score});
      const auto b = compose_reward(st.collided, st.action, in, w, mem);
      ASSERT_EQ(b.total, st.reward.total);
      ASSERT_EQ(b.penalty, st.reward.penalty);
      total += b.total;
    }
    EXPECT_EQ(total, r.metrics.total_reward);
  }
}

TEST(Curriculum, GeometricLayerCountsTheUnionOfSeenKeypoints) {
  DdpgAgent ag(fixture::small_agent(16), 4);
  const auto scene = generate_scene(6, SceneParams{});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto opt = small_options(50);
    opt.scripted = random_policy;
    const auto r = run_episode(ag, scene, phase_weights(1), rng, opt);
    std::set<int> seen;
    double running = 0.0;
    for (const auto& st : r.steps) {
      if (st.collided) continue;
      const auto before = seen.size();
      for (int k : visible_set(scene, st.pose, opt.sensor).keypoints) seen.insert(k);
      ASSERT_EQ(st.reward.r_geom, static_cast<double>(seen.size() - before));
      running += st.reward.r_geom;
    }
    EXPECT_EQ(running, static_cast<double>(seen.size()));
  }
}

TEST(Curriculum, FirstPhaseIgnoresTheSemanticOracle) {
  const auto scene = generate_scene(7, SceneParams{});
  auto run = [&](SemanticOracle sem) {
    DdpgAgent ag(fixture::small_agent(16), 5);
    Rng rng(9);
    auto opt = small_options(80);
    opt.semantic = std::move(sem);
    std::vector<double> rewards;
    for (int e = 0; e < 3; ++e)
      for (const auto& st : run_episode(ag, scene, phase_weights(1), rng, opt).steps)
        rewards.push_back(st.reward.total);
    return std::make_pair(rewards, ag.actor);
  };
  const auto honest = run({});
  const auto corrupt = run([](const GridScene&, const AgentPose&, const SensorParams&) { return SemanticScore{1.0}; });
  EXPECT_EQ(honest.first, corrupt.first);
  EXPECT_TRUE(honest.second == corrupt.second);
}

TEST(Curriculum, DetectorRunsEveryStep) {
  DdpgAgent ag(fixture::small_agent(16), 6);
  Rng rng(10);
  auto opt = small_options(25);
  opt.scripted = random_policy;
  const auto r = run_episode(ag, generate_scene(8, SceneParams{}), phase_weights(3), rng, opt);
  EXPECT_EQ(r.metrics.detector_calls, 25);
  std::int64_t tdo = 0;
  for (const auto& st : r.steps) tdo += static_cast<std::int64_t>(st.detections.size());
  EXPECT_EQ(tdo, r.metrics.tdo);
}

TEST(Curriculum, RunWritesFilesPerPhase) {
  fixture::TempDir dir("cur_files");
  const auto cfg = fixture::small_run(1, 2, 15);
  const auto res = run_curriculum(cfg, dir.path());
  ASSERT_EQ(res.phases.size(), 3u);
  for (int p = 1; p <= 3; ++p) {
    const auto csv = fixture::lines(fixture::slurp(dir / ("metrics_phase" + std::to_string(p) + ".csv")));
    ASSERT_EQ(csv.size(), 3u);
    EXPECT_EQ(csv[0], kTrainCsvHeader);
    EXPECT_TRUE(fs::exists(dir / ("checkpoint_phase" + std::to_string(p) + ".json")));
  }
  EXPECT_TRUE(fs::exists(dir / "replay_phase1.bin"));
  EXPECT_TRUE(fs::exists(dir / "replay_phase2.bin"));
  EXPECT_FALSE(fs::exists(dir / "replay_phase3.bin"));
  EXPECT_EQ(fixture::lines(fixture::slurp(dir / "train_log.jsonl")).size(), 6u);
}

TEST(Curriculum, RunsAreDeterministic) {
  fixture::TempDir a("cur_det_a"), b("cur_det_b");
  const auto cfg = fixture::small_run(5, 3, 20);
  run_curriculum(cfg, a.path());
  run_curriculum(cfg, b.path());
  for (const char* f : {"metrics_phase1.csv", "metrics_phase2.csv", "metrics_phase3.csv", "checkpoint_phase3.json",
                        "train_log.jsonl"})
    EXPECT_EQ(fixture::slurp(a / f), fixture::slurp(b / f)) << f;
}

TEST(Curriculum, ResumeMatchesUninterruptedRun) {
  for (bool retain : {true, false}) {
    fixture::TempDir full("cur_full"), resumed("cur_resume");
    auto cfg = fixture::small_run(6, 3, 25);
    cfg.retain_buffer = retain;
    run_curriculum(cfg, full.path());
    const auto cp = load_checkpoint(full / "checkpoint_phase1.json");
    EXPECT_EQ(cp.agent.buffer.size() > 0, retain);
    CurriculumOptions opt;
    opt.first_phase = 1;
    opt.initial_agent = &cp.agent;
    run_curriculum(cfg, resumed.path(), opt);
    for (const char* f : {"metrics_phase2.csv", "metrics_phase3.csv", "checkpoint_phase3.json"})
      EXPECT_EQ(fixture::slurp(full / f), fixture::slurp(resumed / f)) << f << " retain=" << retain;
  }
}

TEST(Curriculum, MetricsCarryPhaseWeights) {
  fixture::TempDir dir("cur_weights");
  run_curriculum(fixture::small_run(2, 1, 5), dir.path());
  const std::vector<std::string> expected{"1,0,0", "0.25,0.75,0", "0.25,0.75,2"};
  for (int p = 1; p <= 3; ++p) {
    const auto rows = fixture::lines(fixture::slurp(dir / ("metrics_phase" + std::to_string(p) + ".csv")));
    ASSERT_GE(rows.size(), 2u);
    // phase,episode,scene_id,alpha,beta,delta,...
    std::vector<std::string> cols;
    std::stringstream ss(rows[1]);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    EXPECT_EQ(cols[3] + "," + cols[4] + "," + cols[5], expected[static_cast<std::size_t>(p - 1)]);
  }
}

TEST(Curriculum, BundledConfigs) {
  const fs::path dir = SEMEX_CONFIG_DIR;
  const auto def = load_run_config(dir / "default.json");
  ASSERT_EQ(def.phases.size(), 3u);
  const double expected[3][3] = {{1.0, 0.0, 0.0}, {0.25, 0.75, 0.0}, {0.25, 0.75, 2.0}};
  for (int p = 0; p < 3; ++p) {
    EXPECT_EQ(def.phases[p].weights.alpha, expected[p][0]);
    EXPECT_EQ(def.phases[p].weights.beta, expected[p][1]);
    EXPECT_EQ(def.phases[p].weights.delta, expected[p][2]);
  }
  EXPECT_TRUE(def.retain_buffer);
  const auto smoke = load_run_config(dir / "smoke.json");
  EXPECT_EQ(smoke.phases.size(), 1u);
  EXPECT_NO_THROW(load_run_config(dir / "trend.json"));
}

TEST(Curriculum, SmokePhaseProducesFiles) {
  fixture::TempDir dir("cur_smoke");
  const auto cfg = run_config_from_json(minimal_config());
  run_curriculum(cfg, dir.path());
  EXPECT_TRUE(fs::exists(dir / "checkpoint_phase1.json"));
  EXPECT_EQ(fixture::lines(fixture::slurp(dir / "metrics_phase1.csv")).size(), 2u);
  EXPECT_FALSE(fs::exists(dir / "replay_phase1.bin"));
}

TEST(Curriculum, SchemaViolationsAreRejected) {
  auto j = minimal_config();
  j["learning_rate"] = 0.1;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["sensor"]["range"] = 4;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["phases"][0]["speed"] = 1;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["phases"][0]["weights"] = {{"alpha", 1.0}, {"beta", 0.5}};
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["phases"][0]["phase_id"] = 2;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["phases"][0]["scene_pool"] = {-4};
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["agent"]["state_size"] = 99;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = minimal_config();
  j["phases"][0]["episodes"] = 0;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.json"), ConfigError);
}

TEST(Curriculum, NoiseAnnealsLinearly) {
  AgentConfig c;
  c.noise_sigma_start = 0.2;
  c.noise_sigma_end = 0.05;
  EXPECT_DOUBLE_EQ(annealed_sigma(c, 0, 11), 0.2);
  EXPECT_DOUBLE_EQ(annealed_sigma(c, 10, 11), 0.05);
  EXPECT_NEAR(annealed_sigma(c, 5, 11), 0.125, 1e-15);
  EXPECT_DOUBLE_EQ(annealed_sigma(c, 0, 1), 0.2);
}
