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
#include <string>
#include <vector>

#include "topex/common.hpp"
#include "topex/grid_world.hpp"
#include "topex/occupancy_grid.hpp"

namespace topex {

enum class MapTier { Small, Middle, Large };

inline int tier_size(MapTier t) {
  switch (t) {
    case MapTier::Small: return 32;
    case MapTier::Middle: return 48;
    case MapTier::Large: return 64;
  }
  return 48;
}

inline int tier_horizon(MapTier t) { return t == MapTier::Large ? 600 : 300; }

inline MapTier parse_tier(const std::string& s) {
  if (s == "small") return MapTier::Small;
  if (s == "middle") return MapTier::Middle;
  if (s == "large") return MapTier::Large;
  throw ConfigError("unknown map tier '" + s + "' (small|middle|large)");
}

inline const char* tier_name(MapTier t) {
  switch (t) {
    case MapTier::Small: return "small";
    case MapTier::Middle: return "middle";
    case MapTier::Large: return "large";
  }
  return "?";
}

struct MapGenConfig {
  int width = 48;
  int height = 48;
  double cell_size = 0.25;
  int rooms = 0;          // 0 picks a count from the area
  int min_room = 6;       // cells, interior side length
  int max_room = 14;
  int min_corridor = 1;   // cells
  int max_corridor = 2;
  double loop_chance = 0.3;  // extra corridor per room closing a cycle
  int pillars = 0;        // 0 picks a count from the area, negative disables
  int max_attempts = 20;
  double min_free_fraction = 0.25;

  static MapGenConfig for_tier(MapTier t) {
    MapGenConfig c;
    c.width = c.height = tier_size(t);
    return c;
  }
};

namespace detail {

struct Room {
  int x0, y0, x1, y1;  // inclusive interior bounds
  Cell center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
};

inline int rand_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1))); }

inline void carve(OccupancyGrid& g, int x0, int y0, int x1, int y1) {
  for (int y = std::max(1, y0); y <= std::min(g.height() - 2, y1); ++y)
    for (int x = std::max(1, x0); x <= std::min(g.width() - 2, x1); ++x) g.set({x, y}, CellLabel::Free);
}

/// L-shaped corridor between room centres with the given width.
inline void corridor(OccupancyGrid& g, Cell a, Cell b, int width, bool horizontal_first) {
  const Cell bend = horizontal_first ? Cell{b.x, a.y} : Cell{a.x, b.y};
  auto seg = [&](Cell p, Cell q) {
    carve(g, std::min(p.x, q.x), std::min(p.y, q.y), std::max(p.x, q.x) + width - 1, std::max(p.y, q.y) + width - 1);
  };
  seg(a, bend);
  seg(bend, b);
}

/// Largest 4-connected free component. A 4-connected region is also
/// traversable under the no-corner-cutting move rule.
inline std::vector<char> largest_component4(const OccupancyGrid& g) {
  std::vector<int> label(g.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<Cell> stack;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (label[i] >= 0 || !g.is_free(g.cell_at(i))) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t n = 0;
    stack.push_back(g.cell_at(i));
    label[i] = id;
    while (!stack.empty()) {
      const Cell c = stack.back();
      stack.pop_back();
      ++n;
      const Cell nb[4] = {{c.x + 1, c.y}, {c.x - 1, c.y}, {c.x, c.y + 1}, {c.x, c.y - 1}};
      for (const Cell q : nb)
        if (g.is_free(q) && label[g.index(q)] < 0) {
          label[g.index(q)] = id;
          stack.push_back(q);
        }
    }
    sizes.push_back(n);
  }
  std::vector<char> out(g.size(), 0);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = label[i] == best;
  return out;
}

}  // namespace detail

/// Rooms-and-corridors layout. Rooms are placed without overlap, each room is
/// joined to its nearest earlier room, and some rooms get an extra corridor to
/// form loops. Pillars are dropped into rooms only when the free region stays
/// connected. Throws GenerationError when no attempt meets the free-area floor.
inline OccupancyGrid generate_map(const MapGenConfig& cfg, std::uint64_t seed) {
  if (cfg.width < 16 || cfg.height < 16) throw ConfigError("generate_map: grid must be at least 16x16");
  if (cfg.min_room < 1 || cfg.max_room < cfg.min_room) throw ConfigError("generate_map: bad room size range");
  if (cfg.min_corridor < 1 || cfg.max_corridor < cfg.min_corridor) throw ConfigError("generate_map: bad corridor range");
  const int area = cfg.width * cfg.height;
  const int n_rooms = cfg.rooms > 0 ? cfg.rooms : std::max(2, area / 256);
  const int n_pillars = cfg.pillars > 0 ? cfg.pillars : (cfg.pillars == 0 && n_rooms > 1 ? area / 400 : 0);
  Rng rng(seed);
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    OccupancyGrid g(cfg.width, cfg.height, cfg.cell_size);
    for (std::size_t i = 0; i < g.size(); ++i) g.set(g.cell_at(i), CellLabel::Obstacle);

    std::vector<detail::Room> rooms;
    if (n_rooms == 1) {
      rooms.push_back({1, 1, cfg.width - 2, cfg.height - 2});
    } else {
      for (int tries = 0; tries < 400 && static_cast<int>(rooms.size()) < n_rooms; ++tries) {
        const int w = detail::rand_int(rng, cfg.min_room, std::min(cfg.max_room, cfg.width - 2));
        const int h = detail::rand_int(rng, cfg.min_room, std::min(cfg.max_room, cfg.height - 2));
        const int x0 = detail::rand_int(rng, 1, cfg.width - 1 - w);
        const int y0 = detail::rand_int(rng, 1, cfg.height - 1 - h);
        const detail::Room r{x0, y0, x0 + w - 1, y0 + h - 1};
        bool clash = false;
        for (const auto& o : rooms)
          clash = clash || !(r.x1 + 1 < o.x0 || o.x1 + 1 < r.x0 || r.y1 + 1 < o.y0 || o.y1 + 1 < r.y0);
        if (!clash) rooms.push_back(r);
      }
    }
    if (rooms.empty()) continue;
    for (const auto& r : rooms) detail::carve(g, r.x0, r.y0, r.x1, r.y1);
    auto sq = [](Cell a, Cell b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); };
    for (std::size_t i = 1; i < rooms.size(); ++i) {
      std::size_t near = 0;
      for (std::size_t j = 1; j < i; ++j)
        if (sq(rooms[j].center(), rooms[i].center()) < sq(rooms[near].center(), rooms[i].center())) near = j;
      const int w = detail::rand_int(rng, cfg.min_corridor, cfg.max_corridor);
      detail::corridor(g, rooms[i].center(), rooms[near].center(), w, uniform01(rng) < 0.5);
      if (i >= 2 && uniform01(rng) < cfg.loop_chance) {
        const std::size_t other = uniform_index(rng, i);
        if (other != near) detail::corridor(g, rooms[i].center(), rooms[other].center(), w, uniform01(rng) < 0.5);
      }
    }

    for (int p = 0; p < n_pillars && n_rooms > 0; ++p) {
      const auto& r = rooms[uniform_index(rng, rooms.size())];
      if (r.x1 - r.x0 < 4 || r.y1 - r.y0 < 4) continue;
      const Cell c{detail::rand_int(rng, r.x0 + 1, r.x1 - 2), detail::rand_int(rng, r.y0 + 1, r.y1 - 2)};
      const int before = static_cast<int>(g.free_count());
      std::vector<Cell> placed;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          if (g.is_free({c.x + dx, c.y + dy})) {
            g.set({c.x + dx, c.y + dy}, CellLabel::Obstacle);
            placed.push_back({c.x + dx, c.y + dy});
          }
      const auto comp = detail::largest_component4(g);
      const int kept = static_cast<int>(std::count(comp.begin(), comp.end(), 1));
      if (kept != before - static_cast<int>(placed.size()))
        for (const Cell& q : placed) g.set(q, CellLabel::Free);
    }

    // Keep only the largest free component.
    const auto comp = detail::largest_component4(g);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!comp[i]) g.set(g.cell_at(i), CellLabel::Obstacle);
    if (static_cast<double>(g.free_count()) >= cfg.min_free_fraction * (cfg.width - 2) * (cfg.height - 2) ||
        (n_rooms == 1 && g.free_count() > 0))
      return g;
  }
  throw GenerationError("generate_map: no connected layout after " + std::to_string(cfg.max_attempts) + " attempts");
}

}  // namespace topex
