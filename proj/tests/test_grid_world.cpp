// Copyright 2026 The topex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "topex/grid_world.hpp"

namespace topex {
namespace {

using testing::cluttered_room;
using testing::open_room;

TEST(GridWorldReset, SingleAgentSpawnsInFreeCell) {
  GridWorld world(open_room(32, 32), SimConfig{});
  const EpisodeState s = world.reset(1, 7);
  ASSERT_EQ(s.poses.size(), 1u);
  EXPECT_EQ(s.step, 0);
  EXPECT_TRUE(world.grid().is_free(world.grid().cell_of(s.poses[0].position())));
  EXPECT_GE(s.poses[0].heading, 0.0);
  EXPECT_LT(s.poses[0].heading, kTwoPi);
}

TEST(GridWorldReset, ThreeAgentsWithinTwoMetersGeodesic) {
  GridWorld world(open_room(32, 32), SimConfig{});
  for (std::uint64_t seed : {7ull, 8ull, 9ull, 100ull}) {
    const EpisodeState s = world.reset(3, seed);
    std::set<Cell> cells;
    for (const auto& p : s.poses) cells.insert(world.grid().cell_of(p.position()));
    EXPECT_EQ(cells.size(), 3u);
    for (const auto& a : s.poses)
      for (const auto& b : s.poses)
        EXPECT_LE(geodesic_distance(world.grid(), world.grid().cell_of(a.position()), world.grid().cell_of(b.position())), 2.0);
  }
}

TEST(GridWorldReset, Deterministic) {
  GridWorld world(open_room(32, 32), SimConfig{});
  EXPECT_EQ(world.reset(3, 7), world.reset(3, 7));
}

TEST(GridWorldReset, UnsatisfiableSpawnIsReported) {
  // Isolated single free cells: no two agents can share a component.
  OccupancyGrid g(17, 17, 0.25, CellLabel::Obstacle);
  for (int y = 2; y < 16; y += 2)
    for (int x = 2; x < 16; x += 2) g.set({x, y}, CellLabel::Free);
  GridWorld world(g, SimConfig{});
  EXPECT_THROW(world.reset(2, 1), UnsatisfiableSpawn);
  EXPECT_NO_THROW(world.reset(1, 1));
}

TEST(GridWorldReset, RejectsInvalidEnvironment) {
  EXPECT_THROW(GridWorld(OccupancyGrid(20, 20, 0.25), SimConfig{}), ShapeError);
  EXPECT_THROW(GridWorld(open_room(12, 20), SimConfig{}), ShapeError);
}

TEST(GridWorldStep, ForwardAdvancesQuarterMeter) {
  GridWorld world(open_room(40, 40), SimConfig::noiseless());
  Rng rng(1);
  const AgentPose p = world.apply_action({5.0, 5.0, 0.0}, Action::Forward, rng);
  EXPECT_DOUBLE_EQ(p.x, 5.25);
  EXPECT_DOUBLE_EQ(p.y, 5.0);
  EXPECT_DOUBLE_EQ(p.heading, 0.0);
}

TEST(GridWorldStep, WallClampsForward) {
  GridWorld world(open_room(32, 32), SimConfig::noiseless());
  Rng rng(1);
  // Cell x = 30 is the last free column; x = 31 is the wall at 7.75 m.
  const AgentPose start{7.74, 4.0, 0.0};
  const AgentPose p = world.apply_action(start, Action::Forward, rng);
  EXPECT_EQ(p, start);
}

TEST(GridWorldStep, TurnsRotateTenDegrees) {
  GridWorld world(open_room(32, 32), SimConfig::noiseless());
  Rng rng(1);
  const AgentPose l = world.apply_action({4.0, 4.0, 0.0}, Action::TurnLeft, rng);
  EXPECT_NEAR(l.heading, deg_to_rad(10.0), 1e-12);
  const AgentPose r = world.apply_action({4.0, 4.0, 0.0}, Action::TurnRight, rng);
  EXPECT_NEAR(r.heading, kTwoPi - deg_to_rad(10.0), 1e-12);
  EXPECT_EQ(l.x, 4.0);
  EXPECT_EQ(l.y, 4.0);
}

TEST(GridWorldStep, IncrementsStepAndRequiresOneActionPerAgent) {
  GridWorld world(open_room(32, 32), SimConfig{});
  EpisodeState s = world.reset(2, 3);
  std::vector<Action> acts{Action::Forward, Action::TurnLeft};
  s = world.step(s, acts);
  EXPECT_EQ(s.step, 1);
  EXPECT_EQ(s.observations.size(), 2u);
  std::vector<Action> one{Action::Forward};
  EXPECT_THROW(world.step(s, one), ConfigError);
}

TEST(GridWorldSense, OpenSpaceAllRaysAtRange) {
  GridWorld world(open_room(64, 64), SimConfig::noiseless());
  Rng rng(1);
  const Observation o = world.sense({8.0, 8.0, 0.3}, rng);
  ASSERT_EQ(o.depth_signature.size(), 32u);
  for (double d : o.depth_signature) EXPECT_DOUBLE_EQ(d, SimConfig{}.sensor_range);
}

TEST(GridWorldSense, WallOneMeterAhead) {
  GridWorld world(open_room(32, 32), SimConfig::noiseless());
  Rng rng(1);
  // Wall column starts at x = 31 * 0.25 = 7.75 m.
  const Observation o = world.sense({6.75, 4.0, 0.0}, rng);
  EXPECT_NEAR(o.depth_signature[0], 1.0, 1e-9);
}

TEST(GridWorldSense, ZeroNoiseEstimateIsExact) {
  GridWorld world(open_room(32, 32), SimConfig::noiseless());
  Rng rng(1);
  const AgentPose pose{3.3, 4.4, 1.2};
  EXPECT_EQ(world.sense(pose, rng).pose_estimate, pose);
}

TEST(GridWorldSense, EntriesBoundedAndVisibleCellsSorted) {
  Rng maprng(5);
  GridWorld world(cluttered_room(40, 40, 8, maprng), SimConfig{});
  EpisodeState s = world.reset(2, 11);
  const double range = SimConfig{}.sensor_range;
  for (std::size_t k = 0; k < s.observations.size(); ++k) {
    const Observation& o = s.observations[k];
    for (double d : o.depth_signature) {
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, range);
    }
    EXPECT_TRUE(std::is_sorted(o.local_visible_cells.begin(), o.local_visible_cells.end()));
    for (const Cell& c : o.local_visible_cells)
      EXPECT_LE(euclidean(world.grid().center_of(c), s.poses[k].position()), range + 0.25 * kSqrt2);
  }
}

TEST(Coverage, TenOfHundredCells) {
  GridWorld room(open_room(12, 12), SimConfig{}, false);
  ASSERT_EQ(room.explorable_count(), 100u);
  std::vector<KnownMap> maps{KnownMap(room.grid())};
  for (int x = 1; x <= 10; ++x) maps[0].set({x, 1}, Knowledge::Free);
  EXPECT_DOUBLE_EQ(room.coverage_of(maps).coverage, 0.10);
  for (int y = 1; y <= 10; ++y)
    for (int x = 1; x <= 10; ++x) maps[0].set({x, y}, Knowledge::Free);
  EXPECT_DOUBLE_EQ(room.coverage_of(maps).coverage, 1.0);
}

TEST(Coverage, UnionAndOverlapSetArithmetic) {
  const Cell c1{1, 1}, c2{2, 1}, c3{3, 1}, c4{4, 1};
  const auto [uni, over] = union_and_overlap({{c1, c2, c3}, {c3, c4}});
  EXPECT_EQ(uni, 4u);
  EXPECT_EQ(over, 1u);

  GridWorld room(open_room(16, 16), SimConfig{});
  std::vector<KnownMap> maps(2, KnownMap(room.grid()));
  for (Cell c : {c1, c2, c3}) maps[0].set(c, Knowledge::Free);
  for (Cell c : {c3, c4}) maps[1].set(c, Knowledge::Free);
  const CoverageStats st = room.coverage_of(maps);
  EXPECT_EQ(st.union_cells, 4u);
  EXPECT_EQ(st.overlap_cells, 1u);
  EXPECT_DOUBLE_EQ(st.mutual_overlap(), 0.25);
}

TEST(Coverage, ExplorableExcludesSealedPockets) {
  OccupancyGrid g = open_room(20, 20);
  for (int i = 13; i <= 17; ++i) {
    g.set({i, 13}, CellLabel::Obstacle);
    g.set({i, 17}, CellLabel::Obstacle);
    g.set({13, i}, CellLabel::Obstacle);
    g.set({17, i}, CellLabel::Obstacle);
  }
  GridWorld world(g, SimConfig{});
  EXPECT_EQ(world.explorable_count() + 9, g.free_count());
  EXPECT_FALSE(world.is_explorable({15, 15}));
}

TEST(MapText, RoundTripsBitExactly) {
  Rng rng(3);
  const OccupancyGrid g = cluttered_room(33, 20, 6, rng, 0.3);
  const std::string text = g.to_text();
  const OccupancyGrid back = OccupancyGrid::from_text(text);
  EXPECT_EQ(back, g);
  EXPECT_EQ(back.to_text(), text);
}

TEST(MapText, MalformedInputsThrow) {
  EXPECT_THROW(OccupancyGrid::from_text(""), FormatError);
  EXPECT_THROW(OccupancyGrid::from_text("2 2 0.25\n..\n"), FormatError);
  EXPECT_THROW(OccupancyGrid::from_text("2 1 0.25\n.x\n"), FormatError);
  EXPECT_THROW(OccupancyGrid::from_text("2 1 abc\n..\n"), FormatError);
}

// Property sweep over random action sequences on cluttered rooms.
class SimulatorProperties : public ::testing::TestWithParam<int> {};

TEST_P(SimulatorProperties, TrajectoryInvariants) {
  Rng rng(static_cast<std::uint64_t>(GetParam()));
  GridWorld world(cluttered_room(32, 32, 10, rng), SimConfig{});
  const int n = 1 + GetParam() % 3;
  std::vector<std::vector<Action>> script;
  for (int t = 0; t < 120; ++t) {
    std::vector<Action> acts;
    for (int k = 0; k < n; ++k) acts.push_back(uniform01(rng) < 0.6 ? Action::Forward : kAllActions[uniform_index(rng, 2)]);
    script.push_back(acts);
  }
  auto run = [&] {
    std::vector<EpisodeState> traj{world.reset(n, 1000 + GetParam())};
    for (const auto& a : script) traj.push_back(world.step(traj.back(), a));
    return traj;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a, b);
  double prev_cov = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (const auto& p : a[t].poses) EXPECT_TRUE(world.grid().is_free(world.grid().cell_of(p.position())));
    const double cov = world.coverage_stats(a[t]).coverage;
    EXPECT_GE(cov, prev_cov);
    EXPECT_LE(cov, 1.0);
    prev_cov = cov;
    if (t == 0) continue;
    for (int k = 0; k < n; ++k)
      for (std::size_t i = 0; i < world.grid().size(); ++i) {
        if (a[t - 1].explored[k].at_index(i) == Knowledge::Unknown) continue;
        EXPECT_EQ(a[t].explored[k].at_index(i), a[t - 1].explored[k].at_index(i));
      }
  }
}

TEST_P(SimulatorProperties, ZeroNoiseFidelity) {
  Rng rng(static_cast<std::uint64_t>(GetParam()) + 77);
  GridWorld world(cluttered_room(32, 32, 10, rng), SimConfig::noiseless());
  EpisodeState s = world.reset(2, GetParam());
  for (int t = 0; t < 60; ++t) {
    std::vector<Action> acts{kAllActions[uniform_index(rng, 3)], kAllActions[uniform_index(rng, 3)]};
    s = world.step(s, acts);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(s.observations[k].pose_estimate, s.poses[k]);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SimulatorProperties, ::testing::Range(0, 8));

}  // namespace
}  // namespace topex
