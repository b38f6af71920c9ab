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

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topex/common.hpp"
#include "topex/distance_field.hpp"
#include "topex/occupancy_grid.hpp"

namespace topex {

struct AgentPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians in [0, 2*pi)
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
  Point position() const { return {x, y}; }
};

enum class Action : std::uint8_t { TurnLeft = 0, TurnRight = 1, Forward = 2 };

inline constexpr std::array<Action, 3> kAllActions = {Action::TurnLeft, Action::TurnRight, Action::Forward};

inline const char* action_name(Action a) {
  switch (a) {
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
    case Action::Forward: return "Forward";
  }
  return "?";
}

inline Action parse_action(const std::string& s) {
  for (auto a : kAllActions)
    if (s == action_name(a)) return a;
  throw FormatError("unknown action '" + s + "'");
}

struct SimConfig {
  double forward_step = 0.25;     // meters per Forward
  double turn_deg = 10.0;         // degrees per turn
  double sensor_range = 2.0;      // meters
  int signature_rays = 32;        // depth signature length R
  int visibility_rays = 180;      // rays used to reveal cells
  double sigma_pos = 0.02;        // meters, pose-estimate noise
  double sigma_heading_deg = 0.5; // degrees, pose-estimate noise
  double action_noise = 0.05;     // fraction of the nominal motion
  double spawn_radius = 2.0;      // max pairwise geodesic spawn distance, meters
  int horizon = 300;

  static SimConfig noiseless() {
    SimConfig c;
    c.sigma_pos = 0.0;
    c.sigma_heading_deg = 0.0;
    c.action_noise = 0.0;
    return c;
  }
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct Observation {
  std::vector<double> depth_signature;   // R entries in [0, sensor_range], ray 0 along the heading
  AgentPose pose_estimate;
  std::vector<Cell> local_visible_cells; // sorted, unique
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct EpisodeState {
  int step = 0;
  std::vector<AgentPose> poses;
  std::vector<KnownMap> explored;  // per agent, never shared
  std::uint64_t rng_seed = 0;
  Rng rng;
  std::vector<Observation> observations;  // sensed at the current poses
  friend bool operator==(const EpisodeState&, const EpisodeState&) = default;
};

struct CoverageStats {
  double coverage = 0.0;
  std::size_t explorable_cells = 0;
  std::size_t union_cells = 0;    // explorable cells seen by any agent
  std::size_t overlap_cells = 0;  // explorable cells seen by two or more agents
  std::vector<std::size_t> per_agent_cells;
  double cell_area = 0.0;         // m^2 per cell

  double union_area() const { return static_cast<double>(union_cells) * cell_area; }
  double overlap_area() const { return static_cast<double>(overlap_cells) * cell_area; }
  double mutual_overlap() const {
    return union_cells == 0 ? 0.0 : static_cast<double>(overlap_cells) / static_cast<double>(union_cells);
  }
};

struct RayHit {
  double distance = 0.0;
  bool hit = false;  // an obstacle (or the grid edge) ended the ray
};

/// Grid traversal (Amanatides-Woo). Calls visit(cell) for every cell the ray
/// enters within `range`, including the obstacle cell that stops it.
template <typename Visit>
RayHit cast_ray(const OccupancyGrid& g, Point origin, double bearing, double range, Visit&& visit) {
  const double cs = g.cell_size();
  const double px = origin.x / cs, py = origin.y / cs;
  const double dx = std::cos(bearing), dy = std::sin(bearing);
  Cell c{static_cast<int>(std::floor(px)), static_cast<int>(std::floor(py))};
  if (!g.in_bounds(c) || g.at(c) == CellLabel::Obstacle) return {0.0, true};
  visit(c);
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  const double tiny = 1e-15;
  const double t_delta_x = std::abs(dx) > tiny ? 1.0 / std::abs(dx) : kInf;
  const double t_delta_y = std::abs(dy) > tiny ? 1.0 / std::abs(dy) : kInf;
  double t_max_x = std::abs(dx) > tiny ? ((dx > 0 ? (c.x + 1 - px) : (px - c.x)) * t_delta_x) : kInf;
  double t_max_y = std::abs(dy) > tiny ? ((dy > 0 ? (c.y + 1 - py) : (py - c.y)) * t_delta_y) : kInf;
  const double range_cells = range / cs;
  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      c.x += step_x;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      c.y += step_y;
      t_max_y += t_delta_y;
    }
    if (t > range_cells) return {range, false};
    if (!g.in_bounds(c)) return {t * cs, true};
    visit(c);
    if (g.at(c) == CellLabel::Obstacle) return {t * cs, true};
  }
}

/// Checks the environment invariants required of simulator scenes.
inline void validate_environment(const OccupancyGrid& g) {
  if (g.width() < 16 || g.height() < 16) throw ShapeError("environment grid must be at least 16x16");
  for (int x = 0; x < g.width(); ++x)
    if (g.is_free({x, 0}) || g.is_free({x, g.height() - 1})) throw ShapeError("environment boundary must be obstacle");
  for (int y = 0; y < g.height(); ++y)
    if (g.is_free({0, y}) || g.is_free({g.width() - 1, y})) throw ShapeError("environment boundary must be obstacle");
  const std::size_t free = g.free_count();
  if (free == 0) throw ShapeError("environment has no free cells");
}

/// Cells of the largest 8-connected free component (ties: the component containing the lowest index).
inline std::vector<char> largest_free_component(const OccupancyGrid& g) {
  std::vector<int> label(g.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (label[i] >= 0 || g.at(g.cell_at(i)) != CellLabel::Free) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    stack.push_back(i);
    label[i] = id;
    while (!stack.empty()) {
      const auto j = stack.back();
      stack.pop_back();
      ++sizes[id];
      for_each_move(g, g.cell_at(j), [&](Cell n, bool) {
        const auto k = g.index(n);
        if (label[k] < 0) {
          label[k] = id;
          stack.push_back(k);
        }
      });
    }
  }
  std::vector<char> mask(g.size(), 0);
  if (sizes.empty()) return mask;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < g.size(); ++i) mask[i] = label[i] == best;
  return mask;
}

/// Deterministic multi-agent grid simulator.
class GridWorld {
 public:
  GridWorld(OccupancyGrid grid, SimConfig config, bool validate = true)
      : grid_(std::move(grid)), config_(config) {
    if (validate) validate_environment(grid_);
    explorable_ = largest_free_component(grid_);
    explorable_count_ = static_cast<std::size_t>(std::count(explorable_.begin(), explorable_.end(), 1));
  }

  const OccupancyGrid& grid() const { return grid_; }
  const SimConfig& config() const { return config_; }
  const std::vector<char>& explorable_mask() const { return explorable_; }
  std::size_t explorable_count() const { return explorable_count_; }
  bool is_explorable(Cell c) const { return grid_.in_bounds(c) && explorable_[grid_.index(c)]; }

  /// Spawns agents in distinct explorable cells within spawn_radius geodesic
  /// distance of each other and senses once at the spawn poses.
  EpisodeState reset(int n_agents, std::uint64_t seed) const {
    if (n_agents < 1) throw ConfigError("reset: need at least one agent");
    EpisodeState s;
    s.rng_seed = seed;
    s.rng.seed(seed);
    std::vector<Cell> candidates;
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (explorable_[i]) candidates.push_back(grid_.cell_at(i));
    if (candidates.size() < static_cast<std::size_t>(n_agents)) throw UnsatisfiableSpawn("reset: not enough free cells");

    std::vector<Cell> spawn;
    for (int attempt = 0; attempt < 200 && spawn.empty(); ++attempt) {
      const Cell anchor = candidates[uniform_index(s.rng, candidates.size())];
      std::vector<Cell> chosen{anchor};
      std::vector<DistanceField> fields{compute_distance_field(grid_, anchor, config_.spawn_radius + 1e-9)};
      std::vector<Cell> near;
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        const Cell c = grid_.cell_at(i);
        if (c != anchor && fields[0].dist[i] <= config_.spawn_radius + 1e-9) near.push_back(c);
      }
      for (int k = 1; k < n_agents; ++k) {
        std::vector<Cell> ok;
        for (const Cell& c : near) {
          if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
          bool all = true;
          for (const auto& f : fields) all = all && f.at(c) <= config_.spawn_radius + 1e-9;
          if (all) ok.push_back(c);
        }
        if (ok.empty()) break;
        const Cell pick = ok[uniform_index(s.rng, ok.size())];
        chosen.push_back(pick);
        fields.push_back(compute_distance_field(grid_, pick, config_.spawn_radius + 1e-9));
      }
      if (static_cast<int>(chosen.size()) == n_agents) spawn = chosen;
    }
    if (spawn.empty()) throw UnsatisfiableSpawn("reset: no placement satisfies the spawn distance constraint");

    for (const Cell& c : spawn) {
      const Point p = grid_.center_of(c);
      s.poses.push_back({p.x, p.y, wrap_angle(uniform(s.rng, 0.0, kTwoPi))});
      s.explored.emplace_back(grid_);
    }
    sense_all(s);
    return s;
  }

  /// Advances every agent by one action, then senses at the new poses.
  EpisodeState step(EpisodeState s, std::span<const Action> actions) const {
    if (actions.size() != s.poses.size()) throw ConfigError("step: one action per agent required");
    for (std::size_t k = 0; k < actions.size(); ++k) s.poses[k] = apply_action(s.poses[k], actions[k], s.rng);
    ++s.step;
    sense_all(s);
    return s;
  }

  /// Noise-aware motion model with collision clipping.
  AgentPose apply_action(const AgentPose& pose, Action a, Rng& rng) const {
    const double turn = deg_to_rad(config_.turn_deg);
    const double n1 = gaussian(rng, config_.action_noise);
    const double n2 = gaussian(rng, config_.action_noise);
    AgentPose out = pose;
    switch (a) {
      case Action::TurnLeft: out.heading = wrap_angle(pose.heading + turn * (1.0 + n1)); break;
      case Action::TurnRight: out.heading = wrap_angle(pose.heading - turn * (1.0 + n1)); break;
      case Action::Forward: {
        const double heading = wrap_angle(pose.heading + turn * n2);
        const double length = config_.forward_step * (1.0 + n1);
        constexpr int kSubsteps = 10;
        const double dx = length * std::cos(heading), dy = length * std::sin(heading);
        for (int i = 1; i <= kSubsteps; ++i) {
          const double frac = static_cast<double>(i) / kSubsteps;
          const Point p{pose.x + frac * dx, pose.y + frac * dy};
          if (!grid_.is_free(grid_.cell_of(p))) break;
          out.x = p.x;
          out.y = p.y;
        }
        out.heading = heading;
        break;
      }
    }
    return out;
  }

  /// Ray-cast depth signature plus revealed cells and a noisy pose estimate.
  Observation sense(const AgentPose& pose, Rng& rng) const {
    Observation o;
    const double range = config_.sensor_range;
    o.depth_signature.resize(static_cast<std::size_t>(config_.signature_rays));
    for (int i = 0; i < config_.signature_rays; ++i) {
      const double bearing = pose.heading + kTwoPi * i / config_.signature_rays;
      o.depth_signature[static_cast<std::size_t>(i)] = cast_ray(grid_, pose.position(), bearing, range, [](Cell) {}).distance;
    }
    std::vector<char> seen(grid_.size(), 0);
    for (int i = 0; i < config_.visibility_rays; ++i) {
      const double bearing = pose.heading + kTwoPi * i / config_.visibility_rays;
      cast_ray(grid_, pose.position(), bearing, range, [&](Cell c) { seen[grid_.index(c)] = 1; });
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i]) o.local_visible_cells.push_back(grid_.cell_at(i));
    std::sort(o.local_visible_cells.begin(), o.local_visible_cells.end());
    const double ex = gaussian(rng, config_.sigma_pos);
    const double ey = gaussian(rng, config_.sigma_pos);
    const double eh = gaussian(rng, deg_to_rad(config_.sigma_heading_deg));
    o.pose_estimate = {pose.x + ex, pose.y + ey, wrap_angle(pose.heading + eh)};
    return o;
  }

  CoverageStats coverage_stats(const EpisodeState& s) const { return coverage_of(s.explored); }

  CoverageStats coverage_of(std::span<const KnownMap> maps) const {
    CoverageStats st;
    st.explorable_cells = explorable_count_;
    st.cell_area = grid_.cell_size() * grid_.cell_size();
    st.per_agent_cells.assign(maps.size(), 0);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!explorable_[i]) continue;
      int count = 0;
      for (std::size_t k = 0; k < maps.size(); ++k) {
        if (maps[k].at_index(i) == Knowledge::Free) {
          ++count;
          ++st.per_agent_cells[k];
        }
      }
      st.union_cells += count >= 1;
      st.overlap_cells += count >= 2;
    }
    st.coverage = explorable_count_ == 0 ? 0.0
                                         : static_cast<double>(st.union_cells) / static_cast<double>(explorable_count_);
    return st;
  }

 private:
  void sense_all(EpisodeState& s) const {
    s.observations.clear();
    for (std::size_t k = 0; k < s.poses.size(); ++k) {
      Observation o = sense(s.poses[k], s.rng);
      for (const Cell& c : o.local_visible_cells)
        s.explored[k].set(c, grid_.at(c) == CellLabel::Free ? Knowledge::Free : Knowledge::Obstacle);
      s.observations.push_back(std::move(o));
    }
  }

  OccupancyGrid grid_;
  SimConfig config_;
  std::vector<char> explorable_;
  std::size_t explorable_count_ = 0;
};

/// Set arithmetic behind Mutual Overlap: (union size, cells in two or more sets).
inline std::pair<std::size_t, std::size_t> union_and_overlap(const std::vector<std::vector<Cell>>& sets) {
  std::vector<std::pair<Cell, int>> all;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    auto s = sets[k];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (const Cell& c : s) all.emplace_back(c, static_cast<int>(k));
  }
  std::sort(all.begin(), all.end());
  std::size_t uni = 0, over = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    ++uni;
    over += (j - i) >= 2;
    i = j;
  }
  return {uni, over};
}

}  // namespace topex
