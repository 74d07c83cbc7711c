#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "semex/semex.hpp"

using namespace semex;

TEST(Oracle, NothingInViewGivesNoDetections) {
  auto s = fixture::room(9, 9);
  fixture::add_object(s, {4, 7}, 1);
  OracleCounters c;
  EXPECT_TRUE(detect(s, {4, 4, Heading::North}, SensorParams{}, c).empty());
  EXPECT_EQ(c.detector_calls, 1u);
}

TEST(Oracle, TwoInstancesOfOneClass) {
  auto s = fixture::room(9, 9);
  fixture::add_object(s, {3, 2}, 3, 0.9);
  fixture::add_object(s, {5, 2}, 3, 0.7);
  OracleCounters c;
  const auto d = detect(s, {4, 5, Heading::North}, SensorParams{}, c);
  ASSERT_EQ(d.size(), 2u);
  for (const auto& x : d) {
    EXPECT_EQ(x.class_id, 3);
    EXPECT_GT(x.confidence, 0.0);
    EXPECT_LE(x.confidence, 1.0);
  }
}

TEST(Oracle, DetectIsTheVisibleObjectProjection) {
  const auto s = generate_scene(21, SceneParams{});
  const SensorParams sensor;
  OracleCounters c;
  std::uint64_t calls = 0;
  for (const auto& cell : s.free_cells()) {
    for (int h = 0; h < 360; h += 90) {
      const AgentPose pose{cell.x, cell.y, heading_from_degrees(h)};
      const auto d = detect(s, pose, sensor, c);
      ++calls;
      const auto v = visible_set(s, pose, sensor);
      ASSERT_EQ(d.size(), v.objects.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(d[i].class_id, v.objects[i].class_id);
        EXPECT_EQ(d[i].confidence, v.objects[i].confidence);
      }
    }
  }
  EXPECT_EQ(c.detector_calls, calls);
  EXPECT_EQ(c.semantic_calls, 0u);
}

TEST(Oracle, ZeroFieldScoresZero) {
  auto s = fixture::room(9, 9);
  std::fill(s.semantic_field.begin(), s.semantic_field.end(), 0.0);
  EXPECT_DOUBLE_EQ(semantic_score(s, {4, 6, Heading::North}, SensorParams{}).value, 0.0);
}

TEST(Oracle, NoseToWallScoresMinusOne) {
  const auto s = generate_scene(5, SceneParams{});
  for (int x = 1; x < s.width - 1; ++x) {
    if (s.blocked(x, 1)) continue;
    EXPECT_DOUBLE_EQ(semantic_score(s, {x, 1, Heading::North}, SensorParams{}).value, -1.0);
  }
}

TEST(Oracle, ClusterInViewScoresHigh) {
  auto s = fixture::room(12, 12);
  for (Cell c : {Cell{5, 3}, Cell{6, 3}, Cell{5, 4}, Cell{6, 4}}) fixture::add_object(s, c, 0);
  const SensorParams sensor;
  const AgentPose pose{5, 6, Heading::North};
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      if ((x == pose.x && y == pose.y) || s.blocked(x, y)) continue;
      if (!cell_visible(s, pose, {x, y}, sensor)) continue;
      sum += s.semantic(x, y);
      ++n;
    }
  const double score = semantic_score(s, pose, sensor).value;
  EXPECT_DOUBLE_EQ(score, sum / n);
  EXPECT_GE(score, 0.3);
  EXPECT_EQ(discretize_semantic({score}), 1.0);
}

TEST(Oracle, ScoresStayInRange) {
  const auto s = generate_scene(9, SceneParams{});
  for (const auto& c : s.free_cells())
    for (int h = 0; h < 360; h += 90) {
      const double v = semantic_score(s, {c.x, c.y, heading_from_degrees(h)}, SensorParams{}).value;
      ASSERT_GE(v, -1.0);
      ASSERT_LE(v, 1.0);
    }
}
