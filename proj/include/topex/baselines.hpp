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
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topex/common.hpp"
#include "topex/distance_field.hpp"
#include "topex/grid_world.hpp"
#include "topex/occupancy_grid.hpp"
#include "topex/topo_mapper.hpp"

namespace topex {

/// A global goal for one agent. Ghost planners set ghost_id; CoScan also
/// hands over the rest of the agent's frontier tour.
struct Goal {
  Cell cell;
  int ghost_id = -1;
  std::vector<Cell> tour;
  friend bool operator==(const Goal&, const Goal&) = default;
};

// ---------------------------------------------------------------------------
// Metric-map helpers

inline KnownMap union_map(std::span<const KnownMap> maps) {
  if (maps.empty()) throw ConfigError("union_map: no maps");
  KnownMap out = maps[0];
  for (std::size_t k = 1; k < maps.size(); ++k) out.merge_from(maps[k]);
  return out;
}

/// Explored-free cells sharing an edge with an unknown cell, in index order.
inline std::vector<Cell> frontier_cells(const KnownMap& known) {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < known.size(); ++i) {
    if (known.at_index(i) != Knowledge::Free) continue;
    const Cell c = known.cell_at(i);
    if (known.is_unknown({c.x + 1, c.y}) || known.is_unknown({c.x - 1, c.y}) || known.is_unknown({c.x, c.y + 1}) ||
        known.is_unknown({c.x, c.y - 1}))
      out.push_back(c);
  }
  return out;
}

/// Frontiers worth sending an agent to: those farther than `min_dist` meters
/// from every agent (a frontier under an agent would count as arrived at once).
inline std::vector<Cell> frontier_targets(const KnownMap& known, const std::vector<Cell>& agents, double min_dist) {
  std::vector<Cell> out;
  const double cs = known.cell_size();
  for (const Cell c : frontier_cells(known)) {
    bool near = false;
    for (const Cell a : agents) near = near || cs * std::hypot(c.x - a.x, c.y - a.y) <= min_dist;
    if (!near) out.push_back(c);
  }
  return out;
}

inline bool is_frontier(const KnownMap& known, Cell c) {
  if (!known.is_explored_free(c)) return false;
  return known.is_unknown({c.x + 1, c.y}) || known.is_unknown({c.x - 1, c.y}) || known.is_unknown({c.x, c.y + 1}) ||
         known.is_unknown({c.x, c.y - 1});
}

/// Distance field from `c` on `g`, tolerating a start cell that is blocked on
/// the planning grid (pose noise near walls): the nearest free 8-neighbour is
/// used instead. Returns nullopt when no free start exists.
inline std::optional<DistanceField> field_from(const OccupancyGrid& g, Cell c) {
  if (g.is_free(c)) return compute_distance_field(g, c);
  for (const auto& m : detail::kMoves) {
    const Cell n{c.x + m.dx, c.y + m.dy};
    if (g.is_free(n)) return compute_distance_field(g, n);
  }
  return std::nullopt;
}

inline std::vector<double> distances_from(const OccupancyGrid& g, Cell from, const std::vector<Cell>& targets) {
  std::vector<double> d(targets.size(), kInf);
  const auto f = field_from(g, from);
  if (!f) return d;
  for (std::size_t i = 0; i < targets.size(); ++i) d[i] = f->at(targets[i]);
  return d;
}

/// Lowest finite entry (first on ties); falls back to index 0 when none is finite.
inline std::size_t argmin_finite(const std::vector<double>& d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] < d[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Ghost-node planners (merged topological map)

struct GhostRef {
  int id;
  Cell cell;
};

inline std::vector<GhostRef> active_ghost_refs(const TopoGraph& merged) {
  std::vector<GhostRef> out;
  for (const auto& g : merged.ghosts)
    if (g.active) out.push_back({g.id, g.cell});
  std::sort(out.begin(), out.end(), [](const GhostRef& a, const GhostRef& b) { return a.id < b.id; });
  return out;
}

inline std::vector<Goal> random_ghost_goal(const TopoGraph& merged, std::size_t n_agents, Rng& rng) {
  const auto ghosts = active_ghost_refs(merged);
  if (ghosts.empty()) throw ExplorationComplete("no active ghost nodes");
  std::vector<Goal> out;
  for (std::size_t k = 0; k < n_agents; ++k) {
    const auto& g = ghosts[uniform_index(rng, ghosts.size())];
    out.push_back({g.cell, g.id, {}});
  }
  return out;
}

/// Geodesic-nearest active ghost per agent on each agent's planning grid;
/// ties go to the lowest ghost id.
inline std::vector<Goal> nearest_ghost_goal(const TopoGraph& merged, const std::vector<Cell>& agents,
                                            std::span<const OccupancyGrid> planning) {
  const auto ghosts = active_ghost_refs(merged);
  if (ghosts.empty()) throw ExplorationComplete("no active ghost nodes");
  std::vector<Cell> cells;
  for (const auto& g : ghosts) cells.push_back(g.cell);
  std::vector<Goal> out;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const auto d = distances_from(planning[k], agents[k], cells);
    const auto& g = ghosts[argmin_finite(d)];
    out.push_back({g.cell, g.id, {}});
  }
  return out;
}

/// Unknown cells within `radius` meters (straight line) of `c`.
inline int information_gain(const KnownMap& known, Cell c, double radius) {
  const int r = static_cast<int>(std::ceil(radius / known.cell_size()));
  const double r2 = (radius / known.cell_size()) * (radius / known.cell_size());
  int n = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r2 && known.is_unknown({c.x + dx, c.y + dy})) ++n;
  return n;
}

/// Normalised traveling cost d_fmm(agent, ghost) / gain(ghost); lowest wins.
inline std::vector<Goal> topological_frontier_goal(const TopoGraph& merged, const std::vector<Cell>& agents,
                                                   std::span<const KnownMap> known, std::span<const OccupancyGrid> planning,
                                                   double radius) {
  const auto ghosts = active_ghost_refs(merged);
  if (ghosts.empty()) throw ExplorationComplete("no active ghost nodes");
  std::vector<Cell> cells;
  for (const auto& g : ghosts) cells.push_back(g.cell);
  std::vector<Goal> out;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const auto d = distances_from(planning[k], agents[k], cells);
    std::vector<double> cost(ghosts.size());
    for (std::size_t j = 0; j < ghosts.size(); ++j) {
      const int gain = information_gain(known[k], ghosts[j].cell, radius);
      cost[j] = gain > 0 ? d[j] / gain : kInf;
    }
    const auto& g = ghosts[argmin_finite(cost)];
    out.push_back({g.cell, g.id, {}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frontier planners (union metric map)

/// Geodesically nearest frontier per agent.
inline std::vector<Goal> nearest_frontier_goal(const KnownMap& known, const std::vector<Cell>& agents, double min_dist = 0.0) {
  const auto frontiers = min_dist > 0.0 ? frontier_targets(known, agents, min_dist) : frontier_cells(known);
  if (frontiers.empty()) throw ExplorationComplete("no frontier cells");
  const OccupancyGrid planning = known.optimistic_grid();
  std::vector<Goal> out;
  for (const Cell a : agents) out.push_back({frontiers[argmin_finite(distances_from(planning, a, frontiers))], -1, {}});
  return out;
}

struct VoronoiPartition {
  std::vector<int> owner;  // per cell, -1 for blocked or unreachable cells
  std::vector<DistanceField> fields;
};

/// Owner of each free cell = argmin geodesic distance over agents (ties: lowest id).
inline VoronoiPartition voronoi_partition(const OccupancyGrid& planning, const std::vector<Cell>& agents) {
  VoronoiPartition p;
  p.owner.assign(planning.size(), -1);
  for (const Cell a : agents) {
    auto f = field_from(planning, a);
    if (!f) {
      DistanceField empty;
      empty.width = planning.width();
      empty.height = planning.height();
      empty.cell_size = planning.cell_size();
      empty.dist.assign(planning.size(), kInf);
      p.fields.push_back(std::move(empty));
    } else {
      p.fields.push_back(std::move(*f));
    }
  }
  for (std::size_t i = 0; i < planning.size(); ++i) {
    double best = kInf;
    for (std::size_t k = 0; k < agents.size(); ++k)
      if (p.fields[k].dist[i] < best) {
        best = p.fields[k].dist[i];
        p.owner[i] = static_cast<int>(k);
      }
  }
  return p;
}

/// Each agent targets the nearest frontier inside its own Voronoi cell; an
/// agent owning none escapes to its globally nearest frontier.
inline std::vector<Goal> voronoi_goal(const KnownMap& known, const std::vector<Cell>& agents, double min_dist = 0.0) {
  const auto frontiers = min_dist > 0.0 ? frontier_targets(known, agents, min_dist) : frontier_cells(known);
  if (frontiers.empty()) throw ExplorationComplete("no frontier cells");
  const OccupancyGrid planning = known.optimistic_grid();
  const VoronoiPartition part = voronoi_partition(planning, agents);
  std::vector<Goal> out;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    double best = kInf, any = kInf;
    std::size_t pick = 0, any_pick = 0;
    for (std::size_t j = 0; j < frontiers.size(); ++j) {
      const double d = part.fields[k].at(frontiers[j]);
      if (d < any) {
        any = d;
        any_pick = j;
      }
      if (part.owner[planning.index(frontiers[j])] == static_cast<int>(k) && d < best) {
        best = d;
        pick = j;
      }
    }
    out.push_back({frontiers[best < kInf ? pick : any_pick], -1, {}});
  }
  return out;
}

struct KMeansResult {
  std::vector<Point> centroids;
  std::vector<int> labels;
  std::vector<double> objective;  // sum of squared distances after each assignment step
};

/// Lloyd's algorithm with k distinct seeded initial points; empty clusters
/// keep their previous centroid.
inline KMeansResult kmeans(const std::vector<Point>& pts, int k, std::uint64_t seed, int max_iter = 50) {
  if (k <= 0 || static_cast<std::size_t>(k) > pts.size()) throw ConfigError("kmeans: need 1 <= k <= points");
  Rng rng(seed);
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int c = 0; c < k; ++c) std::swap(idx[c], idx[c + uniform_index(rng, pts.size() - c)]);
  KMeansResult r;
  for (int c = 0; c < k; ++c) r.centroids.push_back(pts[idx[c]]);
  r.labels.assign(pts.size(), -1);
  auto d2 = [](Point a, Point b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); };
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double obj = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (d2(pts[i], r.centroids[c]) < d2(pts[i], r.centroids[best])) best = c;
      changed = changed || r.labels[i] != best;
      r.labels[i] = best;
      obj += d2(pts[i], r.centroids[best]);
    }
    r.objective.push_back(obj);
    if (!changed && it > 0) break;
    std::vector<Point> sum(k, Point{0.0, 0.0});
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sum[r.labels[i]].x += pts[i].x;
      sum[r.labels[i]].y += pts[i].y;
      ++count[r.labels[i]];
    }
    for (int c = 0; c < k; ++c)
      if (count[c] > 0) r.centroids[c] = {sum[c].x / count[c], sum[c].y / count[c]};
  }
  return r;
}

/// Minimum-total-cost injective assignment of clusters (columns) to agents
/// (rows). Exhaustive up to six agents, greedy beyond. Returns the cluster
/// per agent or -1.
inline std::vector<int> assign_clusters(const std::vector<std::vector<double>>& cost, int clusters) {
  const int n = static_cast<int>(cost.size());
  std::vector<int> best(n, -1);
  if (clusters == 0) return best;
  auto finite = [](double v) { return std::isfinite(v) ? v : 1e12; };
  if (n <= 6) {
    std::vector<int> agents(n);
    std::iota(agents.begin(), agents.end(), 0);
    double best_cost = kInf;
    // agents[c] serves cluster c for c < clusters.
    do {
      double total = 0.0;
      for (int c = 0; c < clusters; ++c) total += finite(cost[agents[c]][c]);
      if (total < best_cost - 1e-12) {
        best_cost = total;
        std::fill(best.begin(), best.end(), -1);
        for (int c = 0; c < clusters; ++c) best[agents[c]] = c;
      }
    } while (std::next_permutation(agents.begin(), agents.end()));
    return best;
  }
  std::vector<char> used(clusters, 0);
  for (int round = 0; round < std::min(n, clusters); ++round) {
    double bc = kInf;
    int ba = -1, bcl = -1;
    for (int a = 0; a < n; ++a) {
      if (best[a] >= 0) continue;
      for (int c = 0; c < clusters; ++c)
        if (!used[c] && finite(cost[a][c]) < bc) {
          bc = finite(cost[a][c]);
          ba = a;
          bcl = c;
        }
    }
    best[ba] = bcl;
    used[bcl] = 1;
  }
  return best;
}

/// Greedy nearest-neighbour tour over `cells` starting from `start` (geodesic).
inline std::vector<Cell> greedy_tour(const OccupancyGrid& planning, Cell start, std::vector<Cell> cells) {
  std::vector<Cell> tour;
  Cell cur = start;
  while (!cells.empty()) {
    const auto d = distances_from(planning, cur, cells);
    const std::size_t j = argmin_finite(d);
    tour.push_back(cells[j]);
    cur = cells[j];
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return tour;
}

/// CoScan-style: k-means over frontiers (k = agents), optimal one-to-one
/// cluster assignment by geodesic distance to the cluster's most central
/// member, greedy tour within each cluster. Surplus agents take their
/// globally nearest frontier.
inline std::vector<Goal> coscan_goal(const KnownMap& known, const std::vector<Cell>& agents, std::uint64_t seed,
                                     double min_dist = 0.0) {
  const auto frontiers = min_dist > 0.0 ? frontier_targets(known, agents, min_dist) : frontier_cells(known);
  if (frontiers.empty()) throw ExplorationComplete("no frontier cells");
  const OccupancyGrid planning = known.optimistic_grid();
  const int k = static_cast<int>(std::min(agents.size(), frontiers.size()));
  std::vector<Point> pts;
  for (const Cell c : frontiers) pts.push_back(planning.center_of(c));
  const KMeansResult km = kmeans(pts, k, seed);
  std::vector<Cell> rep(k);
  for (int c = 0; c < k; ++c) {
    double best = kInf;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (km.labels[i] == c && euclidean(pts[i], km.centroids[c]) < best) {
        best = euclidean(pts[i], km.centroids[c]);
        rep[c] = frontiers[i];
      }
  }
  std::vector<std::vector<double>> cost;
  std::vector<std::vector<double>> to_frontier;
  for (const Cell a : agents) {
    cost.push_back(distances_from(planning, a, rep));
    to_frontier.push_back(distances_from(planning, a, frontiers));
  }
  const std::vector<int> assignment = assign_clusters(cost, k);
  std::vector<Goal> out;
  for (std::size_t a = 0; a < agents.size(); ++a) {
    if (assignment[a] < 0) {
      out.push_back({frontiers[argmin_finite(to_frontier[a])], -1, {}});
      continue;
    }
    std::vector<Cell> members;
    for (std::size_t i = 0; i < frontiers.size(); ++i)
      if (km.labels[i] == assignment[a]) members.push_back(frontiers[i]);
    std::vector<Cell> tour = greedy_tour(planning, agents[a], members);
    Goal g{tour.front(), -1, {}};
    g.tour.assign(tour.begin() + 1, tour.end());
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local execution

enum class LocalStatus { Move, Arrived, Unreachable };

struct LocalDecision {
  LocalStatus status = LocalStatus::Move;
  Action action = Action::TurnLeft;
  Cell waypoint;
};

struct LocalConfig {
  double turn_threshold_deg = 15.0;
  double arrival_radius = 0.3;  // meters
  int lookahead = 8;            // cells along the path considered for a straight-line waypoint
  double forward_step = 0.25;   // nominal Forward length, meters
};

/// Heading controller over a shortest path on the planning grid. Picks the
/// farthest path cell (within lookahead) in straight-line sight, turns when
/// the bearing error exceeds the threshold or the nominal Forward would be
/// clipped within half its length, otherwise moves forward.
inline LocalDecision local_execute(const AgentPose& pose, Cell goal, const OccupancyGrid& planning,
                                   const LocalConfig& cfg = {}) {
  LocalDecision d;
  Point p = pose.position();
  const Cell cur = planning.cell_of(p);
  if (cur == goal || euclidean(p, planning.center_of(goal)) <= cfg.arrival_radius) {
    d.status = LocalStatus::Arrived;
    return d;
  }
  if (!planning.is_free(goal)) {
    d.status = LocalStatus::Unreachable;
    return d;
  }
  const DistanceField f = compute_distance_field(planning, goal);
  Cell start = cur;
  if (!f.reachable(start)) {
    // Pose noise can put the estimate in a blocked cell; use a free neighbour.
    double best = kInf;
    for (const auto& m : detail::kMoves) {
      const Cell n{cur.x + m.dx, cur.y + m.dy};
      if (f.reachable(n) && f.at(n) < best) {
        best = f.at(n);
        start = n;
      }
    }
    if (!f.reachable(start)) {
      d.status = LocalStatus::Unreachable;
      return d;
    }
  }
  if (start != cur) {
    // Reason from the closest point of the start cell instead.
    const double cs = planning.cell_size(), margin = 0.1 * cs;
    p.x = std::clamp(p.x, start.x * cs + margin, (start.x + 1) * cs - margin);
    p.y = std::clamp(p.y, start.y * cs + margin, (start.y + 1) * cs - margin);
  }
  const std::vector<Cell> path = descend(planning, f, start);
  Cell target = path.size() > 1 ? path[1] : path[0];
  for (std::size_t i = std::min<std::size_t>(path.size() - 1, static_cast<std::size_t>(cfg.lookahead)); i >= 1; --i) {
    const Point q = planning.center_of(path[i]);
    if (!cast_ray(planning, p, std::atan2(q.y - p.y, q.x - p.x), euclidean(p, q), [](Cell) {}).hit) {
      target = path[i];
      break;
    }
  }
  d.waypoint = target;
  const Point q = planning.center_of(target);
  const double err = wrap_signed(std::atan2(q.y - p.y, q.x - p.x) - pose.heading);
  const Action turn = err >= 0 ? Action::TurnLeft : Action::TurnRight;
  if (std::abs(err) > deg_to_rad(cfg.turn_threshold_deg)) {
    d.action = turn;
    return d;
  }
  // Forward only when the nominal step is not clipped almost at once.
  constexpr int kSub = 10;
  int free_sub = 0;
  for (int i = 1; i <= kSub; ++i) {
    const double frac = cfg.forward_step * i / kSub;
    if (!planning.is_free(planning.cell_of({p.x + frac * std::cos(pose.heading), p.y + frac * std::sin(pose.heading)}))) break;
    ++free_sub;
  }
  d.action = free_sub >= kSub / 2 ? Action::Forward : turn;
  return d;
}

}  // namespace topex
