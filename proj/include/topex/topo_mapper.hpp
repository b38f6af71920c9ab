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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "topex/common.hpp"
#include "topex/distance_field.hpp"
#include "topex/grid_world.hpp"
#include "topex/nn.hpp"
#include "topex/occupancy_grid.hpp"

namespace topex {

struct MapperConfig {
  double similarity_threshold = 0.75;
  double ghost_radius = 3.0;  // meters
  int ghosts_per_main = 12;
  double ratio_edge = 3.0;    // geodesic / straight-line limit for main-main edges
  double abs_edge = 10.0;     // meters
  double dedup_radius = 1.0;  // meters
  double pass_radius = 0.5;   // meters
  double merge_radius = 3.0;  // meters
  bool no_distance = false;   // disables geodesic edge and ghost pruning
  friend bool operator==(const MapperConfig&, const MapperConfig&) = default;
};

struct MainNode {
  int id = -1;
  Cell cell;
  std::vector<double> signature;
  int created_step = 0;
  int origin = 0;  // agent whose mapper created the node
  bool ghosts_spawned = false;
  friend bool operator==(const MainNode&, const MainNode&) = default;
};

struct GhostNode {
  int id = -1;
  int parent = -1;
  Cell cell;
  bool active = true;
  int origin = 0;
  Cell anchor;  // cell of the main that spawned it; kept when merge re-parents the ghost
  friend bool operator==(const GhostNode&, const GhostNode&) = default;
};

struct TopoGraph {
  std::vector<MainNode> mains;
  std::vector<GhostNode> ghosts;
  std::vector<std::pair<int, int>> edges;  // (lo, hi), sorted, unique
  std::vector<int> last_localized;         // per agent, -1 when unset
  int next_id = 0;    // ids are next_id, next_id + id_stride, ...
  int id_stride = 1;  // per-agent graphs interleave ids so they never collide

  int take_id() {
    const int id = next_id;
    next_id += id_stride;
    return id;
  }

  friend bool operator==(const TopoGraph&, const TopoGraph&) = default;

  const MainNode* find_main(int id) const {
    for (const auto& m : mains)
      if (m.id == id) return &m;
    return nullptr;
  }
  MainNode* find_main(int id) {
    for (auto& m : mains)
      if (m.id == id) return &m;
    return nullptr;
  }
  int main_index(int id) const {
    for (std::size_t i = 0; i < mains.size(); ++i)
      if (mains[i].id == id) return static_cast<int>(i);
    return -1;
  }
  const GhostNode* find_ghost(int id) const {
    for (const auto& g : ghosts)
      if (g.id == id) return &g;
    return nullptr;
  }

  bool has_edge(int a, int b) const {
    const auto e = std::minmax(a, b);
    return std::binary_search(edges.begin(), edges.end(), std::pair<int, int>{e.first, e.second});
  }
  void add_edge(int a, int b) {
    if (a == b) return;
    const auto e = std::minmax(a, b);
    const std::pair<int, int> p{e.first, e.second};
    auto it = std::lower_bound(edges.begin(), edges.end(), p);
    if (it == edges.end() || *it != p) edges.insert(it, p);
  }
  void remove_edge(int a, int b) {
    const auto e = std::minmax(a, b);
    const std::pair<int, int> p{e.first, e.second};
    auto it = std::lower_bound(edges.begin(), edges.end(), p);
    if (it != edges.end() && *it == p) edges.erase(it);
  }

  std::size_t active_ghost_count() const {
    return static_cast<std::size_t>(std::count_if(ghosts.begin(), ghosts.end(), [](const GhostNode& g) { return g.active; }));
  }
  int ghost_count_of(int main_id) const {
    return static_cast<int>(std::count_if(ghosts.begin(), ghosts.end(), [&](const GhostNode& g) { return g.parent == main_id; }));
  }
  std::vector<const GhostNode*> active_ghosts() const {
    std::vector<const GhostNode*> out;
    for (const auto& g : ghosts)
      if (g.active) out.push_back(&g);
    return out;
  }
};

/// Place embedding used for localization: the depth signature rotated into
/// the world frame by the estimated heading, offset by half the sensor range so
/// that open and cluttered views point in different directions.
inline std::vector<double> place_signature(std::span<const double> depth, double heading, double sensor_range) {
  const std::size_t r = depth.size();
  std::vector<double> out(r, 0.0);
  if (r == 0) return out;
  const double shift = heading / (kTwoPi / static_cast<double>(r));
  for (std::size_t j = 0; j < r; ++j) {
    // world bearing j corresponds to local ray index j - shift
    double local = std::fmod(static_cast<double>(j) - shift, static_cast<double>(r));
    if (local < 0) local += static_cast<double>(r);
    const auto i0 = static_cast<std::size_t>(std::floor(local)) % r;
    const auto i1 = (i0 + 1) % r;
    const double t = local - std::floor(local);
    out[j] = (1.0 - t) * depth[i0] + t * depth[i1] - 0.5 * sensor_range;
  }
  return out;
}

struct LocalizeResult {
  int main_id = -1;
  bool created = false;
  double best_similarity = -2.0;
};

/// Localizes against the graph's main nodes or creates a new one at `cell`.
inline LocalizeResult localize_and_update(TopoGraph& graph, std::span<const double> signature, Cell cell, int agent,
                                          int step, const MapperConfig& cfg) {
  if (graph.last_localized.size() <= static_cast<std::size_t>(agent)) graph.last_localized.resize(agent + 1, -1);
  LocalizeResult r;
  int best = -1;
  for (const auto& m : graph.mains) {
    double sim;
    try {
      sim = nn::cosine_similarity(signature, m.signature);
    } catch (const UndefinedSimilarity&) {
      sim = 1.0;  // degenerate signatures never justify a new node
    }
    if (sim > r.best_similarity) {
      r.best_similarity = sim;
      best = m.id;
    }
  }
  if (best >= 0 && r.best_similarity >= cfg.similarity_threshold) {
    r.main_id = best;
    graph.last_localized[agent] = best;
    return r;
  }
  MainNode n;
  n.id = graph.take_id();
  n.cell = cell;
  n.signature.assign(signature.begin(), signature.end());
  n.created_step = step;
  n.origin = agent;
  graph.mains.push_back(std::move(n));
  const int prev = graph.last_localized[agent];
  if (prev >= 0 && graph.find_main(prev) != nullptr) graph.add_edge(prev, graph.mains.back().id);
  graph.last_localized[agent] = graph.mains.back().id;
  r.main_id = graph.mains.back().id;
  r.created = true;
  return r;
}

/// Places up to m ghosts at bearings 2*pi*b/m and straight-line radius lambda.
/// Blocked bearings snap back to the last free cell on the ray; a bearing
/// blocked within pass_radius of the main is skipped.
inline void spawn_ghosts(TopoGraph& graph, int main_id, const OccupancyGrid& grid, const MapperConfig& cfg) {
  MainNode* m = graph.find_main(main_id);
  if (m == nullptr || m->ghosts_spawned) return;
  m->ghosts_spawned = true;
  const Cell origin_cell = m->cell;
  const int origin = m->origin;
  const Point origin_pt = grid.center_of(origin_cell);
  std::vector<Cell> placed;
  for (int b = 0; b < cfg.ghosts_per_main; ++b) {
    const double bearing = kTwoPi * b / cfg.ghosts_per_main;
    Cell last = origin_cell;
    const RayHit hit = cast_ray(grid, origin_pt, bearing, cfg.ghost_radius, [&](Cell c) {
      if (grid.is_free(c)) last = c;
    });
    Cell target;
    if (!hit.hit) {
      target = grid.cell_of({origin_pt.x + cfg.ghost_radius * std::cos(bearing), origin_pt.y + cfg.ghost_radius * std::sin(bearing)});
      if (!grid.is_free(target)) target = last;
    } else {
      target = last;
    }
    // A snap that lands within pass_radius would be promoted on the spot.
    if (euclidean(grid.center_of(target), origin_pt) <= cfg.pass_radius) continue;
    if (std::find(placed.begin(), placed.end(), target) != placed.end()) continue;
    placed.push_back(target);
    GhostNode g;
    g.id = graph.take_id();
    g.parent = main_id;
    g.cell = target;
    g.origin = origin;
    g.anchor = origin_cell;
    graph.ghosts.push_back(g);
  }
}

/// Deactivates ghosts that the agent's own metric map shows as explored.
inline void prune_ghosts(TopoGraph& graph, const KnownMap& known) {
  for (auto& g : graph.ghosts)
    if (g.active && known.at(g.cell) != Knowledge::Unknown) g.active = false;
}

/// Deactivates ghosts whose straight segment from their spawning main now crosses
/// a known obstacle: the spawn-time snap would land elsewhere, and a ghost
/// behind a wall usually sits inside solid, never-observable space.
inline void prune_occluded_ghosts(TopoGraph& graph, const KnownMap& known) {
  const double cs = known.cell_size();
  const OccupancyGrid blocked = known.optimistic_grid();
  for (auto& g : graph.ghosts) {
    if (!g.active || !blocked.is_free(g.anchor)) continue;
    const Point a{(g.anchor.x + 0.5) * cs, (g.anchor.y + 0.5) * cs};
    const Point b{(g.cell.x + 0.5) * cs, (g.cell.y + 0.5) * cs};
    const double len = euclidean(a, b);
    if (len <= 0.0) continue;
    if (cast_ray(blocked, a, std::atan2(b.y - a.y, b.x - a.x), len, [](Cell) {}).hit) g.active = false;
  }
}

/// Converts every active ghost within pass_radius of the agent into a main node
/// linked to its former parent. The new mains spawn ghosts on the next tick.
inline std::vector<int> promote_ghosts(TopoGraph& graph, const AgentPose& estimate, double cell_size, int agent,
                                       std::span<const double> signature, int step, const MapperConfig& cfg) {
  if (graph.last_localized.size() <= static_cast<std::size_t>(agent)) graph.last_localized.resize(agent + 1, -1);
  std::vector<int> promoted;
  const Point p = estimate.position();
  for (std::size_t i = 0; i < graph.ghosts.size();) {
    const GhostNode g = graph.ghosts[i];
    const Point c{(g.cell.x + 0.5) * cell_size, (g.cell.y + 0.5) * cell_size};
    if (g.active && euclidean(p, c) <= cfg.pass_radius) {
      MainNode n;
      n.id = g.id;
      n.cell = g.cell;
      n.signature.assign(signature.begin(), signature.end());
      n.created_step = step;
      n.origin = g.origin;
      graph.mains.push_back(std::move(n));
      graph.add_edge(g.parent, g.id);
      graph.last_localized[agent] = g.id;
      promoted.push_back(g.id);
      graph.ghosts.erase(graph.ghosts.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  return promoted;
}

struct PruneStats {
  int edges_removed = 0;
  int ghosts_removed = 0;
};

/// Geodesic clean-up run once per global step over a planning grid:
/// (a) drops main-main edges whose geodesic length exceeds ratio_edge times
///     the straight-line length or abs_edge meters;
/// (b) deletes active ghosts lying within dedup_radius (geodesic) of a main
///     that is not their parent or of a ghost with another parent. Newer
///     ghosts are examined first, so the older of two duplicates survives.
inline PruneStats prune_edges_and_spurious(TopoGraph& graph, const OccupancyGrid& grid, const MapperConfig& cfg) {
  PruneStats st;
  const double cs = grid.cell_size();
  std::vector<std::pair<int, int>> kept;
  for (const auto& [a, b] : graph.edges) {
    const MainNode* ma = graph.find_main(a);
    const MainNode* mb = graph.find_main(b);
    if (ma == nullptr || mb == nullptr) {
      ++st.edges_removed;
      continue;
    }
    const double straight = euclidean(grid.center_of(ma->cell), grid.center_of(mb->cell));
    const double limit = std::min(cfg.ratio_edge * straight, cfg.abs_edge);
    double geo = kInf;
    if (grid.is_free(ma->cell) && grid.is_free(mb->cell))
      geo = compute_distance_field(grid, ma->cell, limit + cs).at(mb->cell);
    if (geo > cfg.ratio_edge * straight || geo > cfg.abs_edge) {
      ++st.edges_removed;
    } else {
      kept.emplace_back(a, b);
    }
  }
  graph.edges = std::move(kept);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < graph.ghosts.size(); ++i)
    if (graph.ghosts[i].active) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return graph.ghosts[x].id > graph.ghosts[y].id; });
  std::vector<char> removed(graph.ghosts.size(), 0);
  for (std::size_t gi : order) {
    const GhostNode& g = graph.ghosts[gi];
    if (!grid.is_free(g.cell)) continue;
    const DistanceField f = compute_distance_field(grid, g.cell, cfg.dedup_radius);
    bool spurious = false;
    for (const auto& m : graph.mains)
      if (m.id != g.parent && f.at(m.cell) < cfg.dedup_radius) spurious = true;
    for (std::size_t oi = 0; oi < graph.ghosts.size() && !spurious; ++oi) {
      const GhostNode& o = graph.ghosts[oi];
      if (oi == gi || removed[oi] || !o.active || o.parent == g.parent) continue;
      if (f.at(o.cell) < cfg.dedup_radius) spurious = true;
    }
    if (spurious) {
      removed[gi] = 1;
      ++st.ghosts_removed;
    }
  }
  std::vector<GhostNode> ghosts;
  for (std::size_t i = 0; i < graph.ghosts.size(); ++i)
    if (!removed[i]) ghosts.push_back(graph.ghosts[i]);
  graph.ghosts = std::move(ghosts);
  return st;
}

/// Translation (in cells) from an agent's frame to the shared frame, known
/// from the shared relative spawn locations.
struct FrameTransform {
  int dx = 0;
  int dy = 0;
};

/// Merges per-agent graphs into the shared frame. Whenever two mains from
/// different agents lie within merge_radius, a seeded coin picks one to
/// remove; its edges and ghosts are redirected to the survivor (self-loops and
/// duplicate edges dropped). A survivor keeps at most m ghosts, active ones
/// first. Node ids are preserved, so merging a single graph is the identity.
inline TopoGraph merge(std::span<const TopoGraph> graphs, std::span<const FrameTransform> transforms, std::uint64_t seed,
                       double cell_size, const MapperConfig& cfg) {
  if (!transforms.empty() && transforms.size() != graphs.size()) throw ConfigError("merge: one transform per graph");
  struct Entry {
    MainNode node;
    bool alive = true;
  };
  std::vector<Entry> mains;
  std::map<int, int> index_of;  // node id -> index into mains
  std::size_t n_agents = 0;
  TopoGraph out;
  out.next_id = 0;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const FrameTransform t = transforms.empty() ? FrameTransform{} : transforms[k];
    n_agents = std::max(n_agents, graphs[k].last_localized.size());
    out.next_id = std::max(out.next_id, graphs[k].next_id);
    out.id_stride = graphs[k].id_stride;
    for (const auto& m : graphs[k].mains) {
      if (index_of.count(m.id)) throw ConfigError("merge: duplicate node id " + std::to_string(m.id));
      Entry e{m, true};
      e.node.cell = {m.cell.x + t.dx, m.cell.y + t.dy};
      index_of[m.id] = static_cast<int>(mains.size());
      mains.push_back(std::move(e));
    }
  }
  if (graphs.size() > 1) out.id_stride = 1;
  std::vector<int> redirect(mains.size());
  for (std::size_t i = 0; i < mains.size(); ++i) redirect[i] = static_cast<int>(i);

  Rng rng(seed);
  for (std::size_t i = 0; i < mains.size(); ++i) {
    for (std::size_t j = i + 1; j < mains.size(); ++j) {
      if (!mains[i].alive || !mains[j].alive) continue;
      if (mains[i].node.origin == mains[j].node.origin) continue;
      const double d = cell_size * std::hypot(mains[i].node.cell.x - mains[j].node.cell.x, mains[i].node.cell.y - mains[j].node.cell.y);
      if (d >= cfg.merge_radius) continue;
      const bool drop_i = uniform01(rng) < 0.5;
      const std::size_t victim = drop_i ? i : j;
      const std::size_t survivor = drop_i ? j : i;
      mains[victim].alive = false;
      redirect[victim] = static_cast<int>(survivor);
    }
  }
  auto final_id = [&](int old) {
    auto it = index_of.find(old);
    if (it == index_of.end()) return -1;
    int i = it->second;
    while (redirect[i] != i) i = redirect[i];
    return mains[i].node.id;
  };

  for (auto& e : mains)
    if (e.alive) out.mains.push_back(std::move(e.node));
  for (const auto& g : graphs)
    for (const auto& [a, b] : g.edges) {
      const int na = final_id(a), nb = final_id(b);
      if (na >= 0 && nb >= 0) out.add_edge(na, nb);
    }

  std::map<int, std::vector<GhostNode>> by_parent;
  std::vector<int> parent_order;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const FrameTransform t = transforms.empty() ? FrameTransform{} : transforms[k];
    for (const auto& g : graphs[k].ghosts) {
      const int parent = final_id(g.parent);
      if (parent < 0) continue;
      const bool redirected = parent != g.parent;
      if (redirected && !g.active) continue;
      GhostNode ng = g;
      ng.parent = parent;
      ng.cell = {g.cell.x + t.dx, g.cell.y + t.dy};
      ng.anchor = {g.anchor.x + t.dx, g.anchor.y + t.dy};
      auto& bucket = by_parent[parent];
      if (bucket.empty()) parent_order.push_back(parent);
      bucket.push_back(ng);
    }
  }
  for (int parent : parent_order) {
    auto& bucket = by_parent[parent];
    if (static_cast<int>(bucket.size()) > cfg.ghosts_per_main)
      std::stable_partition(bucket.begin(), bucket.end(), [](const GhostNode& g) { return g.active; });
    const std::size_t keep = std::min(bucket.size(), static_cast<std::size_t>(cfg.ghosts_per_main));
    out.ghosts.insert(out.ghosts.end(), bucket.begin(), bucket.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  if (graphs.size() == 1) {
    // keep the original ghost order
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < graphs[0].ghosts.size(); ++i) pos[graphs[0].ghosts[i].id] = i;
    std::stable_sort(out.ghosts.begin(), out.ghosts.end(), [&](const GhostNode& a, const GhostNode& b) { return pos[a.id] < pos[b.id]; });
  }

  out.last_localized.assign(n_agents, -1);
  for (std::size_t k = 0; k < graphs.size(); ++k)
    for (std::size_t a = 0; a < graphs[k].last_localized.size(); ++a) {
      const int old = graphs[k].last_localized[a];
      if (old < 0 || (graphs.size() > 1 && a != k)) continue;
      out.last_localized[a] = final_id(old);
    }
  return out;
}

/// Structured snapshot used by episode logs and plot exports.
inline nlohmann::json graph_snapshot(const TopoGraph& g) {
  nlohmann::json mains = nlohmann::json::array();
  for (const auto& m : g.mains) mains.push_back({{"id", m.id}, {"x", m.cell.x}, {"y", m.cell.y}, {"type", "main"}, {"origin", m.origin}});
  nlohmann::json ghosts = nlohmann::json::array();
  for (const auto& h : g.ghosts)
    ghosts.push_back({{"id", h.id}, {"x", h.cell.x}, {"y", h.cell.y}, {"type", "ghost"}, {"parent", h.parent}, {"active", h.active}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  return {{"mains", mains}, {"ghosts", ghosts}, {"edges", edges}};
}

/// Per-agent mapper: owns the agent's graph and applies the update rules in a
/// fixed order each env step.
class TopoMapper {
 public:
  TopoMapper(int agent, int n_agents, MapperConfig cfg) : agent_(agent), cfg_(cfg) {
    graph_.last_localized.assign(static_cast<std::size_t>(n_agents), -1);
    graph_.next_id = agent;
    graph_.id_stride = std::max(1, n_agents);
  }

  const TopoGraph& graph() const { return graph_; }
  TopoGraph& graph() { return graph_; }
  const MapperConfig& config() const { return cfg_; }

  /// One env-step update: promotion of ghosts that survived the previous
  /// tick, ghost spawning for mains promoted earlier, localization (new mains
  /// spawn at once), then pruning against the agent's metric map.
  void tick(const Observation& obs, const KnownMap& known, const OccupancyGrid& grid, double sensor_range, int step) {
    const auto sig = place_signature(obs.depth_signature, obs.pose_estimate.heading, sensor_range);
    const std::vector<int> promoted = promote_ghosts(graph_, obs.pose_estimate, grid.cell_size(), agent_, sig, step, cfg_);
    for (std::size_t i = 0; i < graph_.mains.size(); ++i) {
      const MainNode& m = graph_.mains[i];
      if (!m.ghosts_spawned && std::find(promoted.begin(), promoted.end(), m.id) == promoted.end())
        spawn_ghosts(graph_, m.id, grid, cfg_);
    }
    if (promoted.empty()) {
      const Cell cell = node_cell(obs.pose_estimate, known, grid);
      const LocalizeResult loc = localize_and_update(graph_, sig, cell, agent_, step, cfg_);
      if (loc.created) spawn_ghosts(graph_, loc.main_id, grid, cfg_);
    }
    prune_ghosts(graph_, known);
    prune_occluded_ghosts(graph_, known);
  }

  /// Global-step clean-up using the agent's optimistic planning grid.
  PruneStats global_update(const KnownMap& known) {
    if (cfg_.no_distance) return {};
    return prune_edges_and_spurious(graph_, known.optimistic_grid(), cfg_);
  }

 private:
  Cell node_cell(const AgentPose& est, const KnownMap& known, const OccupancyGrid& grid) const {
    const Cell c = grid.cell_of(est.position());
    if (known.is_explored_free(c) && grid.is_free(c)) return c;
    Cell best = c;
    double best_d = kInf;
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        const Cell n{c.x + dx, c.y + dy};
        if (!known.is_explored_free(n) || !grid.is_free(n)) continue;
        const double d = euclidean(grid.center_of(n), est.position());
        if (d < best_d) {
          best_d = d;
          best = n;
        }
      }
    return best;
  }

  int agent_;
  MapperConfig cfg_;
  TopoGraph graph_;
};

}  // namespace topex
