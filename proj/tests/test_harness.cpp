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

#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "topex/config.hpp"
#include "topex/episode.hpp"
#include "topex/evaluation.hpp"
#include "topex/mapgen.hpp"

namespace topex {
namespace {

using testing::open_room;

// 4-connected flood fill from the first free cell.
std::size_t reachable_free(const OccupancyGrid& g) {
  std::vector<char> seen(g.size(), 0);
  std::queue<Cell> q;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.is_free(g.cell_at(i))) {
      q.push(g.cell_at(i));
      seen[i] = 1;
      break;
    }
  std::size_t n = 0;
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    ++n;
    for (const Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}}) {
      const Cell m{c.x + d.x, c.y + d.y};
      if (!g.is_free(m) || seen[g.index(m)]) continue;
      seen[g.index(m)] = 1;
      q.push(m);
    }
  }
  return n;
}

SimConfig quiet_sim() {
  SimConfig s;
  s.sigma_pos = 0.0;
  s.sigma_heading_deg = 0.0;
  s.action_noise = 0.0;
  return s;
}

EpisodeConfig short_episode(int horizon = 120, SimConfig sim = {}) {
  EpisodeConfig c;
  c.sim = sim;
  c.horizon = horizon;
  c.sim.horizon = horizon;
  return c;
}

GridWorld world_for(OccupancyGrid g, const EpisodeConfig& c) { return GridWorld(std::move(g), c.sim); }

// ---------------------------------------------------------------------------
// Map generation

TEST(MapGen, FreeRegionConnectedForManySeeds) {
  for (const MapTier t : {MapTier::Small, MapTier::Middle, MapTier::Large}) {
    MapGenConfig c;
    c.width = c.height = tier_size(t);
    for (std::uint64_t s = 0; s < 15; ++s) {
      const OccupancyGrid g = generate_map(c, s);
      ASSERT_GT(g.free_count(), 0u);
      EXPECT_EQ(reachable_free(g), g.free_count()) << tier_name(t) << " seed " << s;
      for (int x = 0; x < g.width(); ++x) EXPECT_FALSE(g.is_free({x, 0}) || g.is_free({x, g.height() - 1}));
    }
  }
}

TEST(MapGen, SameSeedSameGrid) {
  MapGenConfig c;
  EXPECT_EQ(generate_map(c, 7).to_text(), generate_map(c, 7).to_text());
  EXPECT_NE(generate_map(c, 7).to_text(), generate_map(c, 8).to_text());
}

TEST(MapGen, SingleRoomIsFullyOpen) {
  MapGenConfig c;
  c.width = c.height = 32;
  c.rooms = 1;
  c.pillars = -1;
  const OccupancyGrid g = generate_map(c, 3);
  EXPECT_EQ(g.free_count(), 30u * 30u);
}

TEST(MapGen, ImpossibleFloorThrows) {
  MapGenConfig c;
  c.min_free_fraction = 1.5;
  c.max_attempts = 3;
  EXPECT_THROW(generate_map(c, 1), GenerationError);
  c.width = 8;
  EXPECT_THROW(generate_map(c, 1), ConfigError);
}

TEST(MapGen, TierSizesAndHorizons) {
  EXPECT_EQ(tier_size(MapTier::Small), 32);
  EXPECT_EQ(tier_size(MapTier::Middle), 48);
  EXPECT_EQ(tier_size(MapTier::Large), 64);
  EXPECT_EQ(tier_horizon(MapTier::Middle), 300);
  EXPECT_EQ(tier_horizon(MapTier::Large), 600);
  EXPECT_EQ(parse_tier("large"), MapTier::Large);
  EXPECT_THROW(parse_tier("huge"), ConfigError);
}

// ---------------------------------------------------------------------------
// Metrics

CoverageSample sample(int step, std::size_t uni, std::size_t ov, std::size_t explorable = 100) {
  return {step, uni, ov, explorable};
}

TEST(Metrics, StepsIsFirstCrossing) {
  std::vector<CoverageSample> s;
  for (int t = 0; t <= 200; ++t) s.push_back(sample(t, t < 137 ? 50 : 95, 0));
  const EpisodeMetrics m = compute_metrics(s, 300);
  EXPECT_TRUE(m.reached);
  EXPECT_EQ(m.steps, 137);
  EXPECT_DOUBLE_EQ(m.coverage, 0.95);
}

TEST(Metrics, OverlapIsIntersectionOverUnion) {
  // {c1,c2,c3} and {c3,c4}: union 4, overlap 1.
  const EpisodeMetrics m = compute_metrics({sample(0, 4, 1, 4)}, 10);
  EXPECT_DOUBLE_EQ(m.mutual_overlap, 0.25);
}

TEST(Metrics, OverlapMeasuredAtStepsMoment) {
  const EpisodeMetrics m = compute_metrics({sample(0, 10, 0), sample(1, 90, 9), sample(2, 100, 50)}, 10);
  EXPECT_EQ(m.steps, 1);
  EXPECT_DOUBLE_EQ(m.mutual_overlap, 0.1);
  EXPECT_FALSE(m.overlap_at_end);
}

TEST(Metrics, NotReachedUsesHorizonAndEnd) {
  const EpisodeMetrics m = compute_metrics({sample(0, 10, 0), sample(1, 40, 20)}, 300);
  EXPECT_FALSE(m.reached);
  EXPECT_EQ(m.steps, 300);
  EXPECT_DOUBLE_EQ(m.mutual_overlap, 0.5);
  EXPECT_TRUE(m.overlap_at_end);
}

TEST(Metrics, SingleAgentHasNoOverlap) {
  EpisodeConfig c = short_episode(120, quiet_sim());
  c.n_agents = 1;
  const GridWorld world = world_for(open_room(20, 20), c);
  NearestGhostPlanner p;
  const EpisodeLog log = run_episode(world, c, p, 5);
  EXPECT_EQ(log.metrics.mutual_overlap, 0.0);
  for (const auto& s : log.steps) EXPECT_EQ(s.cov.overlap_cells, 0u);
}

// ---------------------------------------------------------------------------
// Episodes and logs

TEST(Episode, HorizonZeroKeepsSpawnSensing) {
  const GridWorld world = world_for(open_room(20, 20), short_episode(0));
  NearestGhostPlanner p;
  const EpisodeLog log = run_episode(world, short_episode(0), p, 1);
  ASSERT_EQ(log.steps.size(), 1u);
  EXPECT_TRUE(log.steps[0].actions.empty());
  EXPECT_GT(log.steps[0].cov.union_cells, 0u);
  EXPECT_EQ(log.metrics, compute_metrics(log));
}

TEST(Episode, SmallOpenMapReachesFullCoverage) {
  const GridWorld world = world_for(open_room(16, 16), short_episode(300));
  NearestGhostPlanner p;
  const EpisodeLog log = run_episode(world, short_episode(300), p, 2);
  EXPECT_DOUBLE_EQ(log.metrics.coverage, 1.0);
  EXPECT_LT(log.steps.back().step, 300);
}

TEST(Episode, RandomGhostCoversSmallOpenMap) {
  const GridWorld world = world_for(open_room(16, 16), short_episode(300));
  RandomGhostPlanner p;
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_DOUBLE_EQ(run_episode(world, short_episode(300), p, s).metrics.coverage, 1.0);
}

TEST(Episode, DeterministicAndSeedSensitive) {
  MapGenConfig g;
  g.width = g.height = 32;
  const GridWorld world = world_for(generate_map(g, 4), short_episode());
  for (const auto& name : baseline_names()) {
    auto a = make_baseline(name), b = make_baseline(name);
    const std::string la = write_log(run_episode(world, short_episode(), *a, 9));
    EXPECT_EQ(la, write_log(run_episode(world, short_episode(), *b, 9))) << name;
  }
  NearestGhostPlanner p;
  EXPECT_NE(write_log(run_episode(world, short_episode(), p, 9)), write_log(run_episode(world, short_episode(), p, 10)));
}

TEST(Episode, GoalsAreGhostsOrFrontiersAndGlobalsRespectInterval) {
  MapGenConfig g;
  g.width = g.height = 32;
  const EpisodeConfig c = short_episode(200);
  const GridWorld world = world_for(generate_map(g, 5), c);
  NearestGhostPlanner p;
  const EpisodeLog log = run_episode(world, c, p, 3);
  ASSERT_FALSE(log.globals.empty());
  EXPECT_EQ(log.globals.front().env_step, 0);
  for (std::size_t i = 1; i < log.globals.size(); ++i) {
    EXPECT_GT(log.globals[i].env_step, log.globals[i - 1].env_step);
    EXPECT_LE(log.globals[i].env_step - log.globals[i - 1].env_step, c.global_interval);
    EXPECT_EQ(log.globals[i].goals.size(), static_cast<std::size_t>(c.n_agents));
  }
  EXPECT_EQ(log.steps.size(), static_cast<std::size_t>(log.steps.back().step + 1));
}

TEST(Episode, StopAtTargetEndsEarly) {
  EpisodeConfig c = short_episode(300);
  c.stop_at_target = true;
  const GridWorld world = world_for(open_room(16, 16), c);
  NearestGhostPlanner p;
  const EpisodeLog log = run_episode(world, c, p, 2);
  EXPECT_EQ(log.end_reason, "target_reached");
  EXPECT_EQ(log.steps.back().step, log.metrics.steps);
}

TEST(EpisodeLog, WriteReadRoundTrip) {
  MapGenConfig g;
  g.width = g.height = 32;
  const GridWorld world = world_for(generate_map(g, 6), short_episode());
  VoronoiPlanner p;
  const EpisodeLog log = run_episode(world, short_episode(), p, 4);
  const std::string text = write_log(log);
  const EpisodeLog back = read_log(text);
  EXPECT_EQ(write_log(back), text);
  EXPECT_EQ(back.metrics, log.metrics);
  EXPECT_EQ(back.steps.size(), log.steps.size());
}

TEST(EpisodeLog, MalformedThrows) {
  EXPECT_THROW(read_log(""), FormatError);
  EXPECT_THROW(read_log("{not json}\n"), FormatError);
}

TEST(Replay, ReproducesPosesAndMetrics) {
  MapGenConfig g;
  g.width = g.height = 32;
  for (const auto& name : baseline_names()) {
    const GridWorld world = world_for(generate_map(g, 11), short_episode());
    auto p = make_baseline(name);
    const EpisodeLog log = run_episode(world, short_episode(), *p, 21);
    const ReplayResult r = replay(read_log(write_log(log)));
    EXPECT_TRUE(r.poses_match) << name << " at " << r.first_mismatch_step;
    EXPECT_TRUE(r.metrics_match) << name;
    EXPECT_EQ(r.metrics, log.metrics);
  }
}

TEST(Replay, TamperedActionIsDetected) {
  const GridWorld world = world_for(open_room(20, 20), short_episode(60));
  NearestGhostPlanner p;
  EpisodeLog log = run_episode(world, short_episode(60), p, 1);
  ASSERT_GT(log.steps.size(), 10u);
  auto& a = log.steps[5].actions[0];
  a = a == Action::Forward ? Action::TurnLeft : Action::Forward;
  const ReplayResult r = replay(log);
  EXPECT_FALSE(r.poses_match);
  EXPECT_EQ(r.first_mismatch_step, 5);
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<GridWorld> small_worlds(int n) {
  MapSet s;
  s.gen.width = s.gen.height = 32;
  s.count = n;
  s.seed = 42;
  return make_worlds(s.build(), short_episode().sim);
}

PlannerFactory factory(const std::string& name) {
  return [name]() { return make_baseline(name); };
}

TEST(Evaluate, ZeroEpisodesIsEmptyReport) {
  const MetricsReport r = evaluate_planner(factory("nearest_ghost"), small_worlds(1), short_episode(), 0, 1);
  EXPECT_TRUE(r.episodes.empty());
  EXPECT_EQ(r.planner, "nearest_ghost");
}

TEST(Evaluate, DeterministicAndWorkerIndependent) {
  const auto worlds = small_worlds(3);
  const MetricsReport a = evaluate_planner(factory("random_ghost"), worlds, short_episode(), 6, 5);
  EXPECT_EQ(a, evaluate_planner(factory("random_ghost"), worlds, short_episode(), 6, 5));
  EXPECT_EQ(a, evaluate_planner(factory("random_ghost"), worlds, short_episode(), 6, 5, {}, 3));
}

TEST(Evaluate, AggregatesAreArithmeticMeans) {
  const MetricsReport r = evaluate_planner(factory("coscan"), small_worlds(2), short_episode(), 5, 3);
  double s = 0, c = 0, o = 0;
  for (const auto& e : r.episodes) {
    s += e.steps;
    c += e.coverage;
    o += e.mutual_overlap;
    EXPECT_GE(e.coverage, 0.0);
    EXPECT_LE(e.coverage, 1.0);
    EXPECT_GE(e.mutual_overlap, 0.0);
    EXPECT_LE(e.mutual_overlap, 1.0);
    EXPECT_LE(e.steps, 120);
  }
  EXPECT_NEAR(r.steps.mean, s / 5, 1e-12);
  EXPECT_NEAR(r.coverage.mean, c / 5, 1e-12);
  EXPECT_NEAR(r.mutual_overlap.mean, o / 5, 1e-12);
}

TEST(Evaluate, PairedSeedsGiveIdenticalRows) {
  const auto worlds = small_worlds(2);
  const MetricsReport a = evaluate_planner(factory("voronoi"), worlds, short_episode(), 4, 8);
  const MetricsReport b = evaluate_planner(factory("voronoi"), worlds, short_episode(), 4, 8);
  std::istringstream csv(reports_csv({a, b}));
  std::string header, row_a, row_b;
  std::getline(csv, header);
  std::getline(csv, row_a);
  std::getline(csv, row_b);
  EXPECT_EQ(row_a, row_b);
  EXPECT_FALSE(row_a.empty());
}

TEST(Evaluate, MeanStdFormat) {
  const MeanStd m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(1.25));
  EXPECT_EQ(format_mean_std({312.25, 40.5}, 1), "312.2 (40.5)");
  EXPECT_EQ(mean_std({}).mean, 0.0);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, ParsesSectionsCommentsAndOverrides) {
  const KeyValues kv = parse_key_values("seed = 5\n# comment\n[episode]\nhorizon = 600  # inline\nn_agents=3\n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"episode.horizon", "600"}));
  ExperimentConfig c;
  KeyValues all = kv;
  all.push_back(parse_override("episode.horizon=450"));
  apply_key_values(c, all);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.episode.horizon, 450);
  EXPECT_EQ(c.episode.n_agents, 3);
}

TEST(Config, TierSetsSizesAndHorizonBeforeOtherKeys) {
  ExperimentConfig c;
  apply_key_values(c, {{"episode.horizon", "100"}, {"maps.tier", "large"}});
  EXPECT_EQ(c.maps.gen.width, 64);
  EXPECT_EQ(c.episode.horizon, 100);
  ExperimentConfig d;
  apply_key_values(d, {{"maps.tier", "large"}});
  EXPECT_EQ(d.episode.horizon, 600);
}

TEST(Config, TextRoundTrips) {
  ExperimentConfig c;
  apply_key_values(c, {{"trainer.lr", "0.003"}, {"reward.w_t", "0.05"}, {"planner", "htp_single"}, {"noise", "false"},
                       {"maps.rooms", "4"}, {"mapper.no_distance", "true"}});
  ExperimentConfig d;
  apply_key_values(d, parse_key_values(config_text(c)));
  EXPECT_EQ(config_text(d), config_text(c));
  EXPECT_EQ(d.trainer.lr, 0.003);
  EXPECT_TRUE(d.episode.mapper.no_distance);
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(apply_key_values(c, {{"nope", "1"}}), ConfigError);
  EXPECT_THROW(apply_key_values(c, {{"seed", "abc"}}), ConfigError);
  EXPECT_THROW(parse_override("novalue"), ConfigError);
  EXPECT_THROW(load_config("", {{"checkpoint", "/nonexistent/model.ckpt"}}), ConfigError);
  EXPECT_THROW(load_config("", {{"trainer.gamma", "0"}}), ConfigError);
}

TEST(Config, NoiseToggleZeroesSigmas) {
  ExperimentConfig c;
  c.noise = false;
  const EpisodeConfig e = effective_episode(c);
  EXPECT_EQ(e.sim.sigma_pos, 0.0);
  EXPECT_EQ(e.sim.action_noise, 0.0);
  EXPECT_EQ(e.sim.horizon, e.horizon);
}

}  // namespace
}  // namespace topex
