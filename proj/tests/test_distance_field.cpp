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

#include "oracles.hpp"
#include "test_util.hpp"
#include "topex/distance_field.hpp"

namespace topex {
namespace {

using testing::oracle_distances;
using testing::random_grid;

TEST(DistanceField, DiagonalOfEmptyFiveByFive) {
  const OccupancyGrid g(5, 5, 0.25);
  const DistanceField f = compute_distance_field(g, Cell{0, 0});
  EXPECT_EQ(f.at({4, 4}), oracle_distances(g, {{0, 0}})[g.index({4, 4})]);
  EXPECT_NEAR(f.at({4, 4}), 4.0 * std::sqrt(2.0) * 0.25, 1e-12);
  EXPECT_EQ(f.at({0, 0}), 0.0);
}

TEST(DistanceField, SealedCellIsUnreachable) {
  OccupancyGrid g(7, 7, 0.25);
  for (int x = 2; x <= 4; ++x) {
    g.set({x, 2}, CellLabel::Obstacle);
    g.set({x, 4}, CellLabel::Obstacle);
  }
  g.set({2, 3}, CellLabel::Obstacle);
  g.set({4, 3}, CellLabel::Obstacle);
  const DistanceField f = compute_distance_field(g, Cell{0, 0});
  EXPECT_EQ(f.at({3, 3}), kInf);
  EXPECT_FALSE(f.reachable({3, 3}));
  EXPECT_EQ(f.at({2, 2}), kInf);
}

TEST(DistanceField, NoCornerCutting) {
  OccupancyGrid g(3, 3, 1.0);
  g.set({1, 0}, CellLabel::Obstacle);
  g.set({0, 1}, CellLabel::Obstacle);
  const DistanceField f = compute_distance_field(g, Cell{0, 0});
  EXPECT_EQ(f.at({1, 1}), kInf);
}

TEST(DistanceField, InvalidSources) {
  OccupancyGrid g(5, 5, 0.25);
  g.set({2, 2}, CellLabel::Obstacle);
  EXPECT_THROW(compute_distance_field(g, Cell{2, 2}), InvalidSource);
  EXPECT_THROW(compute_distance_field(g, Cell{9, 9}), InvalidSource);
  EXPECT_THROW(compute_distance_field(g, std::span<const Cell>{}), InvalidSource);
  EXPECT_THROW(geodesic_distance(g, {2, 2}, {0, 0}), InvalidSource);
}

TEST(DistanceField, BoundedSearchStopsAtLimit) {
  const OccupancyGrid g(40, 1, 0.25);
  const DistanceField f = compute_distance_field(g, Cell{0, 0}, 2.0);
  EXPECT_DOUBLE_EQ(f.at({8, 0}), 2.0);
  EXPECT_EQ(f.at({9, 0}), kInf);
}

TEST(Geodesic, AdjacentIdentityAndSymmetry) {
  const OccupancyGrid g(8, 8, 0.25);
  EXPECT_DOUBLE_EQ(geodesic_distance(g, {3, 3}, {4, 3}), 0.25);
  EXPECT_EQ(geodesic_distance(g, {3, 3}, {3, 3}), 0.0);
  EXPECT_EQ(geodesic_distance(g, {1, 2}, {6, 5}), geodesic_distance(g, {6, 5}, {1, 2}));
}

TEST(Geodesic, UShapedWallExceedsEuclidean) {
  OccupancyGrid g(12, 12, 0.25);
  for (int y = 2; y <= 9; ++y) g.set({6, y}, CellLabel::Obstacle);
  for (int x = 3; x <= 6; ++x) g.set({x, 9}, CellLabel::Obstacle);
  for (int y = 2; y <= 9; ++y) g.set({3, y}, CellLabel::Obstacle);
  const Cell a{4, 5}, b{8, 5};
  const double geo = geodesic_distance(g, a, b);
  EXPECT_EQ(geo, oracle_distances(g, {a})[g.index(b)]);
  EXPECT_GT(geo, euclidean(g.center_of(a), g.center_of(b)));
}

TEST(ShortestPath, TrivialAndStraight) {
  const OccupancyGrid g(10, 3, 0.25);
  EXPECT_EQ(shortest_path(g, {2, 1}, {2, 1}), (std::vector<Cell>{Cell{2, 1}}));
  OccupancyGrid corridor(10, 3, 0.25);
  for (int x = 0; x < 10; ++x) {
    corridor.set({x, 0}, CellLabel::Obstacle);
    corridor.set({x, 2}, CellLabel::Obstacle);
  }
  const auto p = shortest_path(corridor, {1, 1}, {7, 1});
  std::vector<Cell> expect;
  for (int x = 1; x <= 7; ++x) expect.push_back({x, 1});
  EXPECT_EQ(p, expect);
}

TEST(ShortestPath, DisconnectedThrows) {
  OccupancyGrid g(6, 6, 0.25);
  for (int y = 0; y < 6; ++y) g.set({3, y}, CellLabel::Obstacle);
  EXPECT_THROW(shortest_path(g, {0, 0}, {5, 5}), NoPath);
}

TEST(ShortestPath, RandomGridsMatchOracleLength) {
  Rng rng(42);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const OccupancyGrid g = random_grid(32, 32, 0.25, rng);
    std::vector<Cell> free;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.is_free(g.cell_at(i))) free.push_back(g.cell_at(i));
    const Cell a = free[uniform_index(rng, free.size())];
    const auto oracle = oracle_distances(g, {a});
    for (int k = 0; k < 5; ++k) {
      const Cell b = free[uniform_index(rng, free.size())];
      if (oracle[g.index(b)] == kInf) {
        EXPECT_THROW(shortest_path(g, a, b), NoPath);
        continue;
      }
      const auto path = shortest_path(g, a, b);
      ASSERT_EQ(path.front(), a);
      ASSERT_EQ(path.back(), b);
      for (std::size_t i = 1; i < path.size(); ++i) {
        EXPECT_TRUE(g.is_free(path[i]));
        EXPECT_LE(std::abs(path[i].x - path[i - 1].x), 1);
        EXPECT_LE(std::abs(path[i].y - path[i - 1].y), 1);
      }
      EXPECT_EQ(path_length(path, g.cell_size()), oracle[g.index(b)]);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(DistanceFieldProperties, MatchesOracleOnRandomGrids) {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 4 + static_cast<int>(uniform_index(rng, 40));
    const int h = 4 + static_cast<int>(uniform_index(rng, 40));
    const OccupancyGrid g = random_grid(w, h, uniform(rng, 0.0, 0.4), rng);
    std::vector<Cell> free;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.is_free(g.cell_at(i))) free.push_back(g.cell_at(i));
    if (free.empty()) continue;
    std::vector<Cell> sources;
    const int ns = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int s = 0; s < ns; ++s) sources.push_back(free[uniform_index(rng, free.size())]);
    const DistanceField f = compute_distance_field(g, sources);
    const auto oracle = oracle_distances(g, sources);
    for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(f.dist[i], oracle[i]) << "trial " << trial << " cell " << i;
  }
}

TEST(DistanceFieldProperties, MetricAxioms) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const OccupancyGrid g = random_grid(24, 24, 0.2, rng);
    std::vector<Cell> free;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.is_free(g.cell_at(i))) free.push_back(g.cell_at(i));
    for (int k = 0; k < 30; ++k) {
      const Cell a = free[uniform_index(rng, free.size())];
      const Cell b = free[uniform_index(rng, free.size())];
      const Cell c = free[uniform_index(rng, free.size())];
      const double ab = geodesic_distance(g, a, b), ba = geodesic_distance(g, b, a);
      const double bc = geodesic_distance(g, b, c), ac = geodesic_distance(g, a, c);
      EXPECT_GE(ab, 0.0);
      EXPECT_EQ(ab, ba);
      if (ab < kInf && bc < kInf) {
        EXPECT_LE(ac, ab + bc + 1e-12);
      }
    }
  }
}

TEST(DistanceFieldProperties, RemovingObstacleNeverIncreasesDistance) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    OccupancyGrid g = random_grid(20, 20, 0.3, rng);
    g.set({0, 0}, CellLabel::Free);
    const DistanceField before = compute_distance_field(g, Cell{0, 0});
    std::vector<Cell> obstacles;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!g.is_free(g.cell_at(i))) obstacles.push_back(g.cell_at(i));
    if (obstacles.empty()) continue;
    g.set(obstacles[uniform_index(rng, obstacles.size())], CellLabel::Free);
    const DistanceField after = compute_distance_field(g, Cell{0, 0});
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LE(after.dist[i], before.dist[i]);
  }
}

}  // namespace
}  // namespace topex
