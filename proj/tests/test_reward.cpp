#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "semex/semex.hpp"

using namespace semex;

TEST(Reward, GeometricCountsOnlyNewKeypoints) {
  EpisodeMemory m;
  const std::vector<int> none;
  EXPECT_EQ(geometric_reward(m, none), 0.0);
  m.seen_keypoints = {1, 2, 3};
  const std::vector<int> five{1, 2, 3, 7, 9};
  EXPECT_EQ(geometric_reward(m, five), 2.0);
  EXPECT_EQ(geometric_reward(m, five), 0.0);
  EXPECT_EQ(m.seen_keypoints, (std::set<int>{1, 2, 3, 7, 9}));
  EXPECT_EQ(m.cumulative_feature_count, 2);
}

TEST(Reward, GeometricMatchesSetDifference) {
  Rng rng(4);
  EpisodeMemory m;
  std::set<int> seen;
  for (int step = 0; step < 500; ++step) {
    std::vector<int> vis;
    const auto k = uniform_index(rng, 8);
    for (std::uint64_t i = 0; i < k; ++i) vis.push_back(static_cast<int>(uniform_index(rng, 60)));
    std::sort(vis.begin(), vis.end());
    vis.erase(std::unique(vis.begin(), vis.end()), vis.end());
    int fresh = 0;
    for (int v : vis) fresh += !seen.count(v);
    seen.insert(vis.begin(), vis.end());
    ASSERT_EQ(geometric_reward(m, vis), fresh);
  }
  EXPECT_EQ(m.cumulative_feature_count, static_cast<std::int64_t>(seen.size()));
}

TEST(Reward, ObjectRewardIsCapped) {
  auto dets = [](std::initializer_list<int> classes) {
    std::vector<Detection> d;
    for (int c : classes) d.push_back({c, 0.5});
    return d;
  };
  EpisodeMemory m;
  EXPECT_EQ(object_reward(m, dets({}), 5), 0.0);
  EXPECT_EQ(object_reward(m, dets({1, 2, 3}), 5), 3.0);
  EXPECT_EQ(object_reward(m, dets({1, 2, 3}), 5), 0.0);
  EpisodeMemory m2;
  EXPECT_EQ(object_reward(m2, dets({10, 11, 12, 13, 14, 15, 16}), 5), 5.0);
  EXPECT_EQ(m2.seen_classes.size(), 7u);
  EXPECT_EQ(object_reward(m2, dets({16, 17}), 5), 1.0);
  EpisodeMemory m3;
  EXPECT_EQ(object_reward(m3, dets({4, 4, 4}), 5), 1.0);
  EXPECT_THROW(object_reward(m3, dets({1}), 0), std::invalid_argument);
}

TEST(Reward, DiscretizationBuckets) {
  EXPECT_EQ(discretize_semantic({-1.0}), -1.0);
  EXPECT_EQ(discretize_semantic({-0.5}), -1.0);
  EXPECT_EQ(discretize_semantic({-0.3}), 0.0);
  EXPECT_EQ(discretize_semantic({0.0}), 0.0);
  EXPECT_EQ(discretize_semantic({0.2999999}), 0.0);
  EXPECT_EQ(discretize_semantic({0.3}), 1.0);
  EXPECT_EQ(discretize_semantic({1.0}), 1.0);
  EXPECT_THROW(discretize_semantic({1.5}), std::invalid_argument);
}

TEST(Reward, CollisionReplacesEverything) {
  EpisodeMemory m;
  const auto b = compose_reward(true, DiscreteAction::MoveForward, {3.0, 2.0, 1.0}, RewardWeights{}, m);
  EXPECT_EQ(b.total, -1.0);
  EXPECT_EQ(b.r_geom, 0.0);
  EXPECT_EQ(b.r_obj, 0.0);
  EXPECT_EQ(b.r_sem, 0.0);
  EXPECT_EQ(b.penalty, 0.0);
}

TEST(Reward, SingleLayer) {
  EpisodeMemory m;
  EXPECT_EQ(compose_reward(false, DiscreteAction::MoveForward, {2.0, 0.0, 0.0}, RewardWeights{}, m).total, 2.0);
}

TEST(Reward, ThirdPhaseExample) {
  EpisodeMemory m;
  RewardWeights w;
  w.alpha = 0.25;
  w.beta = 0.75;
  w.delta = 2.0;
  const auto b = compose_reward(false, DiscreteAction::VlmQuery, {4.0, 2.0, 1.0}, w, m);
  EXPECT_DOUBLE_EQ(b.total, 4.5);
  EXPECT_EQ(m.query_streak, 1);
  const auto second = compose_reward(false, DiscreteAction::VlmQuery, {0.0, 0.0, 0.0}, w, m);
  EXPECT_DOUBLE_EQ(second.total, -0.5);
  EXPECT_DOUBLE_EQ(second.penalty, -0.5);
  const auto third = compose_reward(false, DiscreteAction::VlmQuery, {0.0, 0.0, 0.0}, w, m);
  EXPECT_DOUBLE_EQ(third.total, -1.0);
  compose_reward(false, DiscreteAction::RotateLeft, {}, w, m);
  EXPECT_EQ(m.query_streak, 0);
  EXPECT_EQ(m.step_index, 4);
}

TEST(Reward, SemanticOnlyCountsOnQueries) {
  EpisodeMemory m;
  RewardWeights w;
  w.delta = 2.0;
  const auto b = compose_reward(false, DiscreteAction::RotateRight, {0.0, 0.0, 1.0}, w, m);
  EXPECT_EQ(b.r_sem, 0.0);
  EXPECT_EQ(b.total, 0.0);
}

TEST(Reward, DominanceAndLinearity) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    RewardWeights w;
    w.alpha = uniform_real(rng, 0, 3);
    w.beta = uniform_real(rng, 0, 3);
    w.delta = uniform_real(rng, 0, 3);
    const LayerInputs in{uniform_real(rng, 0, 10), uniform_real(rng, 0, 5), uniform_real(rng, -1, 1)};
    const auto a = kAllActions[uniform_index(rng, 4)];
    EpisodeMemory m1, m2;
    m1.query_streak = m2.query_streak = static_cast<int>(uniform_index(rng, 4));
    EXPECT_EQ(compose_reward(true, a, in, w, m1).total, w.collision_penalty);
    const auto b = compose_reward(false, a, in, w, m2);
    const double sem = a == DiscreteAction::VlmQuery ? in.r_sem : 0.0;
    EXPECT_NEAR(b.total, w.alpha * in.r_geom + w.beta * in.r_obj + w.delta * sem + b.penalty, 1e-12);
  }
}

TEST(Reward, WeightValidation) {
  RewardWeights w;
  w.alpha = -1.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = {};
  w.collision_penalty = 0.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = {};
  EXPECT_NO_THROW(w.validate());
}
