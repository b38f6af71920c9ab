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
#include <cstdint>
#include <queue>
#include <span>
#include <vector>

#include "topex/occupancy_grid.hpp"

namespace topex {

// Geodesic distances over free cells with 8-connected moves. A diagonal move
// is legal only when both orthogonally adjacent cells are free, so paths never
// squeeze between two obstacles touching at a corner.
//
// Each cell's optimum is tracked as an exact pair (straight moves, diagonal
// moves); the distance in meters is (straight + diagonal * sqrt2) * cell_size.
// Because sqrt2 is irrational the optimal pair is unique, so any correct
// shortest-path algorithm reproduces the same bits.

namespace detail {

struct Move {
  int dx;
  int dy;
  bool diagonal;
};

inline constexpr Move kMoves[8] = {{1, 0, false},  {-1, 0, false}, {0, 1, false},  {0, -1, false},
                                   {1, 1, true},   {1, -1, true},  {-1, 1, true},  {-1, -1, true}};

inline bool move_allowed(const OccupancyGrid& g, Cell from, const Move& m) {
  const Cell to{from.x + m.dx, from.y + m.dy};
  if (!g.is_free(to)) return false;
  if (m.diagonal) return g.is_free({from.x + m.dx, from.y}) && g.is_free({from.x, from.y + m.dy});
  return true;
}

inline double pair_length(std::int32_t straight, std::int32_t diagonal) {
  return static_cast<double>(straight) + static_cast<double>(diagonal) * kSqrt2;
}

}  // namespace detail

template <typename F>
void for_each_move(const OccupancyGrid& g, Cell c, F&& fn) {
  for (const auto& m : detail::kMoves)
    if (detail::move_allowed(g, c, m)) fn(Cell{c.x + m.dx, c.y + m.dy}, m.diagonal);
}

struct DistanceField {
  int width = 0;
  int height = 0;
  double cell_size = 0.25;
  std::vector<Cell> sources;
  std::vector<double> dist;              // meters, kInf when unreachable
  std::vector<std::int32_t> straight;    // move counts of the optimal path, -1 when unreachable
  std::vector<std::int32_t> diagonal;

  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.x);
  }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  double at(Cell c) const { return in_bounds(c) ? dist[index(c)] : kInf; }
  bool reachable(Cell c) const { return at(c) < kInf; }
};

/// Multi-source Dijkstra wavefront. Cells farther than `max_dist` meters are
/// left unreachable (bounded search).
inline DistanceField compute_distance_field(const OccupancyGrid& g, std::span<const Cell> sources,
                                            double max_dist = kInf) {
  if (sources.empty()) throw InvalidSource("distance field: no sources");
  DistanceField f;
  f.width = g.width();
  f.height = g.height();
  f.cell_size = g.cell_size();
  f.sources.assign(sources.begin(), sources.end());
  f.dist.assign(g.size(), kInf);
  f.straight.assign(g.size(), -1);
  f.diagonal.assign(g.size(), -1);

  std::vector<double> key(g.size(), kInf);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  for (const Cell& s : sources) {
    if (!g.is_free(s)) throw InvalidSource("distance field: source is not a free cell");
    const auto i = g.index(s);
    key[i] = 0.0;
    f.straight[i] = 0;
    f.diagonal[i] = 0;
    open.emplace(0.0, i);
  }
  const double max_key = max_dist / g.cell_size();
  std::vector<char> done(g.size(), 0);
  while (!open.empty()) {
    const auto [k, i] = open.top();
    open.pop();
    if (done[i]) continue;
    done[i] = 1;
    f.dist[i] = k * g.cell_size();
    const Cell c = g.cell_at(i);
    for (const auto& m : detail::kMoves) {
      if (!detail::move_allowed(g, c, m)) continue;
      const auto j = g.index({c.x + m.dx, c.y + m.dy});
      if (done[j]) continue;
      const std::int32_t s = f.straight[i] + (m.diagonal ? 0 : 1);
      const std::int32_t d = f.diagonal[i] + (m.diagonal ? 1 : 0);
      const double nk = detail::pair_length(s, d);
      if (nk > max_key) continue;
      if (nk < key[j]) {
        key[j] = nk;
        f.straight[j] = s;
        f.diagonal[j] = d;
        open.emplace(nk, j);
      }
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!done[i]) f.straight[i] = f.diagonal[i] = -1;
  return f;
}

inline DistanceField compute_distance_field(const OccupancyGrid& g, Cell source, double max_dist = kInf) {
  return compute_distance_field(g, std::span<const Cell>(&source, 1), max_dist);
}

/// Symmetric geodesic distance in meters; kInf when b is an obstacle or disconnected.
inline double geodesic_distance(const OccupancyGrid& g, Cell a, Cell b) {
  if (!g.is_free(a)) throw InvalidSource("geodesic_distance: start is not a free cell");
  if (!g.is_free(b)) return kInf;
  if (a == b) return 0.0;
  return compute_distance_field(g, a).at(b);
}

/// Length in meters of a cell path with 8-adjacent steps.
inline double path_length(const std::vector<Cell>& path, double cell_size) {
  std::int32_t s = 0, d = 0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const bool diag = path[i].x != path[i - 1].x && path[i].y != path[i - 1].y;
    (diag ? d : s) += 1;
  }
  return detail::pair_length(s, d) * cell_size;
}

/// Descends an existing field (sourced at the goal) from `from` to the goal.
inline std::vector<Cell> descend(const OccupancyGrid& g, const DistanceField& f, Cell from) {
  if (!f.reachable(from)) throw NoPath("no path to goal");
  std::vector<Cell> path{from};
  Cell c = from;
  while (f.straight[f.index(c)] + f.diagonal[f.index(c)] > 0) {
    const auto ci = f.index(c);
    bool advanced = false;
    for (const auto& m : detail::kMoves) {
      if (!detail::move_allowed(g, c, m)) continue;
      const Cell n{c.x + m.dx, c.y + m.dy};
      const auto ni = f.index(n);
      if (f.straight[ni] < 0) continue;
      if (f.straight[ni] + (m.diagonal ? 0 : 1) == f.straight[ci] &&
          f.diagonal[ni] + (m.diagonal ? 1 : 0) == f.diagonal[ci]) {
        c = n;
        advanced = true;
        break;
      }
    }
    if (!advanced) throw NoPath("descend: inconsistent distance field");
    path.push_back(c);
  }
  return path;
}

/// Ordered free cells from a to b whose length equals geodesic_distance(a, b).
inline std::vector<Cell> shortest_path(const OccupancyGrid& g, Cell a, Cell b) {
  if (!g.is_free(a) || !g.is_free(b)) throw NoPath("shortest_path: endpoint is not free");
  if (a == b) return {a};
  return descend(g, compute_distance_field(g, b), a);
}

}  // namespace topex
