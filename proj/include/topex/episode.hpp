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
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topex/baselines.hpp"
#include "topex/common.hpp"
#include "topex/grid_world.hpp"
#include "topex/htp_planner.hpp"
#include "topex/topo_mapper.hpp"

namespace topex {

struct EpisodeConfig {
  SimConfig sim;
  MapperConfig mapper;
  LocalConfig local;
  int n_agents = 2;
  int horizon = 300;
  int global_interval = 15;  // env steps per global step
  double target_coverage = 0.9;
  bool replan_on_idle = true;  // start the next global step early once any agent has no goal
  bool log_graphs = true;    // graph snapshots in global records
  bool stop_at_target = false;  // end once coverage reaches the target (training rollouts)
  friend bool operator==(const EpisodeConfig&, const EpisodeConfig&) = default;
};

// ---------------------------------------------------------------------------
// Global planners

/// What a global planner may look at. No ground truth.
struct PlanContext {
  int global_step = 0;
  int env_step = 0;
  const TopoGraph* merged = nullptr;
  std::vector<Cell> agent_cells;
  const std::vector<KnownMap>* known = nullptr;
  const std::vector<OccupancyGrid>* planning = nullptr;  // per-agent optimistic grids
  const KnownMap* union_known = nullptr;
  double ghost_radius = 3.0;
  double min_goal_dist = 0.0;  // frontier goals closer than this to an agent are skipped
  std::uint64_t seed = 0;  // per-global-step seed for stochastic planners
};

struct PlanResult {
  std::vector<Goal> goals;
  nlohmann::json decision = nlohmann::json::object();
};

class GlobalPlanner {
 public:
  virtual ~GlobalPlanner() = default;
  virtual std::string name() const = 0;
  virtual void reset(std::uint64_t /*episode_seed*/) {}
  /// May throw ExplorationComplete when nothing is left to target.
  virtual PlanResult plan(const PlanContext& ctx) = 0;
};

namespace detail {

inline PlanResult frontier_fallback(const PlanContext& ctx) {
  PlanResult r;
  r.goals = nearest_frontier_goal(*ctx.union_known, ctx.agent_cells, ctx.min_goal_dist);
  r.decision["fallback"] = "nearest_frontier";
  return r;
}
}  // namespace detail

/// Ghost-goal planners fall back to the nearest frontier when no ghost is active.
class GhostPlanner : public GlobalPlanner {
 public:
  PlanResult plan(const PlanContext& ctx) override {
    if (ctx.merged->active_ghost_count() == 0) return detail::frontier_fallback(ctx);
    return plan_ghosts(ctx);
  }

 protected:
  virtual PlanResult plan_ghosts(const PlanContext& ctx) = 0;
};

class RandomGhostPlanner : public GhostPlanner {
 public:
  std::string name() const override { return "random_ghost"; }

 protected:
  PlanResult plan_ghosts(const PlanContext& ctx) override {
    Rng rng(ctx.seed);
    return {random_ghost_goal(*ctx.merged, ctx.agent_cells.size(), rng), {}};
  }
};

class NearestGhostPlanner : public GhostPlanner {
 public:
  std::string name() const override { return "nearest_ghost"; }

 protected:
  PlanResult plan_ghosts(const PlanContext& ctx) override {
    return {nearest_ghost_goal(*ctx.merged, ctx.agent_cells, *ctx.planning), {}};
  }
};

class TopologicalFrontierPlanner : public GhostPlanner {
 public:
  std::string name() const override { return "topological_frontier"; }

 protected:
  PlanResult plan_ghosts(const PlanContext& ctx) override {
    return {topological_frontier_goal(*ctx.merged, ctx.agent_cells, *ctx.known, *ctx.planning, ctx.ghost_radius), {}};
  }
};

class NearestFrontierPlanner : public GlobalPlanner {
 public:
  std::string name() const override { return "nearest_frontier"; }
  PlanResult plan(const PlanContext& ctx) override { return {nearest_frontier_goal(*ctx.union_known, ctx.agent_cells, ctx.min_goal_dist), {}}; }
};

class VoronoiPlanner : public GlobalPlanner {
 public:
  std::string name() const override { return "voronoi"; }
  PlanResult plan(const PlanContext& ctx) override { return {voronoi_goal(*ctx.union_known, ctx.agent_cells, ctx.min_goal_dist), {}}; }
};

class CoScanPlanner : public GlobalPlanner {
 public:
  std::string name() const override { return "coscan"; }
  PlanResult plan(const PlanContext& ctx) override { return {coscan_goal(*ctx.union_known, ctx.agent_cells, ctx.seed, ctx.min_goal_dist), {}}; }
};

/// The learned planner. Samples when `sample` is set (training), argmax otherwise.
class HtpPlanner : public GhostPlanner {
 public:
  struct Decision {
    PlannerInput input;
    PlannerOutput output;
    int global_step = 0;
  };

  HtpPlanner(const HtpNetwork& net, bool sample, ForwardOptions opt = {})
      : net_(net), sample_(sample), opt_(std::move(opt)), history_(net.config().history) {}

  std::string name() const override { return std::string("htp_") + variant_name(net_.config().variant); }
  void reset(std::uint64_t episode_seed) override {
    history_.clear();
    decisions_.clear();
    rng_.seed(derive_seed(episode_seed, 0x47544850));
  }
  const std::vector<Decision>& decisions() const { return decisions_; }
  const PlannerHistory& history() const { return history_; }

 protected:
  PlanResult plan_ghosts(const PlanContext& ctx) override {
    PlannerInput in = build_planner_input(*ctx.merged, ctx.agent_cells, *ctx.planning, history_);
    PlannerOutput out = select_goals(net_, in, sample_ ? &rng_ : nullptr, opt_);
    PlanResult r;
    std::vector<Cell> sel_mains, sel_ghosts;
    for (std::size_t k = 0; k < out.choice.size(); ++k) {
      const int c = out.choice[k];
      r.goals.push_back({in.ghosts[c], in.ghost_ids[c], {}});
      sel_ghosts.push_back(in.ghosts[c]);
      sel_mains.push_back(in.mains[in.ghost_parent[c]]);
    }
    r.decision["value"] = out.value;
    r.decision["log_prob"] = out.log_prob;
    history_.record_agents(ctx.agent_cells);
    history_.record_selection(std::move(sel_mains), std::move(sel_ghosts));
    decisions_.push_back({std::move(in), std::move(out), ctx.global_step});
    return r;
  }

 private:
  const HtpNetwork& net_;
  bool sample_;
  ForwardOptions opt_;
  PlannerHistory history_;
  Rng rng_;
  std::vector<Decision> decisions_;
};

inline const std::vector<std::string>& baseline_names() {
  static const std::vector<std::string> names = {"random_ghost", "nearest_ghost", "topological_frontier",
                                                 "nearest_frontier", "voronoi", "coscan"};
  return names;
}

inline std::unique_ptr<GlobalPlanner> make_baseline(const std::string& name) {
  if (name == "random_ghost") return std::make_unique<RandomGhostPlanner>();
  if (name == "nearest_ghost") return std::make_unique<NearestGhostPlanner>();
  if (name == "topological_frontier") return std::make_unique<TopologicalFrontierPlanner>();
  if (name == "nearest_frontier") return std::make_unique<NearestFrontierPlanner>();
  if (name == "voronoi") return std::make_unique<VoronoiPlanner>();
  if (name == "coscan") return std::make_unique<CoScanPlanner>();
  throw ConfigError("unknown planner '" + name + "'");
}

// ---------------------------------------------------------------------------
// Local following

/// Per-agent goal follower around local_execute. An arrived or unreachable
/// goal advances the tour, or leaves the agent idle (turning in place) until
/// the next global step. A blocked Forward is followed by a turn toward the
/// waypoint so a wall contact cannot stall the agent.
class GoalFollower {
 public:
  void set_goal(const Goal& g) {
    goal_ = g.cell;
    tour_ = g.tour;
    active_ = true;
  }
  bool active() const { return active_; }
  Cell goal() const { return goal_; }

  Action act(const AgentPose& est, const KnownMap& known, const OccupancyGrid& planning, const LocalConfig& cfg) {
    const bool blocked = last_action_ == Action::Forward && last_pose_ &&
                         euclidean(last_pose_->position(), est.position()) < 0.25 * 0.4;
    last_pose_ = est;
    while (active_) {
      const LocalDecision d = local_execute(est, goal_, planning, cfg);
      if (d.status == LocalStatus::Move) {
        Action a = d.action;
        if (blocked && a == Action::Forward) {
          const Point q = planning.center_of(d.waypoint);
          const double err = wrap_signed(std::atan2(q.y - est.y, q.x - est.x) - est.heading);
          a = err >= 0 ? Action::TurnLeft : Action::TurnRight;
        }
        last_action_ = a;
        return a;
      }
      advance(known);
    }
    last_action_ = Action::TurnLeft;
    return Action::TurnLeft;
  }

 private:
  void advance(const KnownMap& known) {
    while (!tour_.empty()) {
      const Cell next = tour_.front();
      tour_.erase(tour_.begin());
      if (!known.is_explored_free(next) || is_frontier(known, next)) {
        goal_ = next;
        return;
      }
    }
    active_ = false;
  }

  Cell goal_;
  std::vector<Cell> tour_;
  bool active_ = false;
  std::optional<AgentPose> last_pose_;
  Action last_action_ = Action::TurnLeft;
};

// ---------------------------------------------------------------------------
// Logs and metrics

struct EpisodeMetrics {
  int steps = 0;           // env steps to reach the target (horizon when not reached)
  bool reached = false;
  double coverage = 0.0;   // final
  double mutual_overlap = 0.0;
  bool overlap_at_end = false;  // measured at episode end because the target was never reached
  friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

inline nlohmann::json metrics_json(const EpisodeMetrics& m) {
  return {{"steps", m.steps}, {"reached", m.reached}, {"coverage", m.coverage},
          {"mutual_overlap", m.mutual_overlap}, {"overlap_at_end", m.overlap_at_end}};
}

inline EpisodeMetrics metrics_from_json(const nlohmann::json& j) {
  EpisodeMetrics m;
  m.steps = j.at("steps").get<int>();
  m.reached = j.at("reached").get<bool>();
  m.coverage = j.at("coverage").get<double>();
  m.mutual_overlap = j.at("mutual_overlap").get<double>();
  m.overlap_at_end = j.at("overlap_at_end").get<bool>();
  return m;
}

/// Per-env-step coverage sample used for metrics.
struct CoverageSample {
  int step = 0;
  std::size_t union_cells = 0;
  std::size_t overlap_cells = 0;
  std::size_t explorable = 0;
  double coverage() const { return explorable == 0 ? 0.0 : static_cast<double>(union_cells) / static_cast<double>(explorable); }
  friend bool operator==(const CoverageSample&, const CoverageSample&) = default;
};

struct StepRecord {
  int step = 0;
  std::vector<Action> actions;  // empty for the spawn record
  std::vector<AgentPose> poses;
  CoverageSample cov;
};

struct GlobalRecord {
  int global_step = 0;
  int env_step = 0;
  std::vector<Goal> goals;
  nlohmann::json decision;
  nlohmann::json graph;  // snapshot of the merged graph, null when disabled
  CoverageStats stats;   // at decision time
  int main_nodes = 0;
  int active_ghosts = 0;
};

struct EpisodeLog {
  std::string map_text;
  std::string planner;
  std::uint64_t seed = 0;
  EpisodeConfig config;
  std::vector<StepRecord> steps;
  std::vector<GlobalRecord> globals;
  std::string end_reason;  // horizon | full_coverage | exploration_complete | target_reached
  EpisodeMetrics metrics;
};

/// Steps, final Coverage and Mutual Overlap from per-step samples.
inline EpisodeMetrics compute_metrics(const std::vector<CoverageSample>& samples, int horizon, double target = 0.9) {
  EpisodeMetrics m;
  if (samples.empty()) return m;
  m.steps = horizon;
  const CoverageSample* at = &samples.back();
  for (const auto& s : samples)
    if (s.coverage() >= target) {
      m.reached = true;
      m.steps = s.step;
      at = &s;
      break;
    }
  m.coverage = samples.back().coverage();
  m.mutual_overlap = at->union_cells == 0 ? 0.0 : static_cast<double>(at->overlap_cells) / static_cast<double>(at->union_cells);
  m.overlap_at_end = !m.reached;
  return m;
}

inline EpisodeMetrics compute_metrics(const EpisodeLog& log) {
  std::vector<CoverageSample> s;
  for (const auto& r : log.steps) s.push_back(r.cov);
  return compute_metrics(s, log.config.horizon, log.config.target_coverage);
}

// ---------------------------------------------------------------------------
// Episode loop

struct EpisodeHooks {
  // Called after each global decision with the coverage at decision time.
  std::function<void(const GlobalRecord&)> on_global;
};

/// Cell of a pose estimate, moved to the nearest free neighbour when noise
/// puts it inside a blocked cell.
inline Cell planning_cell(const OccupancyGrid& planning, Point p) {
  const Cell c = planning.cell_of(p);
  if (planning.is_free(c)) return c;
  Cell best = c;
  double best_d = kInf;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const Cell q{c.x + dx, c.y + dy};
      if (planning.is_free(q) && euclidean(planning.center_of(q), p) < best_d) {
        best_d = euclidean(planning.center_of(q), p);
        best = q;
      }
    }
  return best;
}

inline CoverageSample sample_of(int step, const CoverageStats& st) {
  return {step, st.union_cells, st.overlap_cells, st.explorable_cells};
}

/// sense -> mapper update -> (every global_interval steps, or earlier when an
/// agent is idle) merge + goal selection -> local following, until the
/// horizon or full coverage.
inline EpisodeLog run_episode(const GridWorld& world, const EpisodeConfig& cfg, GlobalPlanner& planner, std::uint64_t seed,
                              const EpisodeHooks& hooks = {}) {
  if (cfg.global_interval < 1) throw ConfigError("run_episode: global_interval must be >= 1");
  if (!(world.config() == cfg.sim)) throw ConfigError("run_episode: world and episode sim configs differ");
  EpisodeLog log;
  log.map_text = world.grid().to_text();
  log.planner = planner.name();
  log.seed = seed;
  log.config = cfg;
  planner.reset(seed);

  EpisodeState state = world.reset(cfg.n_agents, derive_seed(seed, 1));
  const std::size_t n = static_cast<std::size_t>(cfg.n_agents);
  std::vector<TopoMapper> mappers;
  for (int k = 0; k < cfg.n_agents; ++k) mappers.emplace_back(k, cfg.n_agents, cfg.mapper);
  std::vector<GoalFollower> followers(n);
  const double cs = world.grid().cell_size();

  auto tick_all = [&]() {
    for (std::size_t k = 0; k < n; ++k)
      mappers[k].tick(state.observations[k], state.explored[k], state.explored[k].optimistic_grid(), cfg.sim.sensor_range,
                      state.step);
  };
  auto record = [&](std::vector<Action> actions) {
    const CoverageStats st = world.coverage_stats(state);
    log.steps.push_back({state.step, std::move(actions), state.poses, sample_of(state.step, st)});
    return st;
  };

  try {
    tick_all();
  } catch (const Error& e) {
    throw Error(std::string("step 0: ") + e.what());
  }
  CoverageStats stats = record({});
  log.end_reason = "horizon";
  int global_step = 0;
  int last_global = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    if (stats.union_cells >= stats.explorable_cells) {
      log.end_reason = "full_coverage";
      break;
    }
    try {
      const bool idle = cfg.replan_on_idle && std::any_of(followers.begin(), followers.end(),
                                                          [](const GoalFollower& f) { return !f.active(); });
      if (t == 0 || t - last_global >= cfg.global_interval || idle) {
        last_global = t;
        std::vector<TopoGraph> graphs;
        for (std::size_t k = 0; k < n; ++k) {
          mappers[k].global_update(state.explored[k]);
          graphs.push_back(mappers[k].graph());
        }
        TopoGraph merged = merge(graphs, {}, derive_seed(derive_seed(seed, 2), static_cast<std::uint64_t>(global_step)), cs,
                                 cfg.mapper);
        const KnownMap uni = union_map(state.explored);
        prune_ghosts(merged, uni);
        prune_occluded_ghosts(merged, uni);
        std::vector<OccupancyGrid> planning;
        std::vector<Cell> cells;
        for (std::size_t k = 0; k < n; ++k) {
          planning.push_back(state.explored[k].optimistic_grid());
          cells.push_back(planning_cell(planning.back(), state.observations[k].pose_estimate.position()));
        }
        PlanContext ctx;
        ctx.global_step = global_step;
        ctx.env_step = t;
        ctx.merged = &merged;
        ctx.agent_cells = cells;
        ctx.known = &state.explored;
        ctx.planning = &planning;
        ctx.union_known = &uni;
        ctx.ghost_radius = cfg.mapper.ghost_radius;
        ctx.min_goal_dist = cfg.local.arrival_radius;
        ctx.seed = derive_seed(derive_seed(seed, 3), static_cast<std::uint64_t>(global_step));
        PlanResult plan;
        try {
          plan = planner.plan(ctx);
        } catch (const ExplorationComplete&) {
          log.end_reason = "exploration_complete";
          break;
        }
        if (plan.goals.size() != n) throw ConfigError("planner returned the wrong number of goals");
        for (std::size_t k = 0; k < n; ++k) followers[k].set_goal(plan.goals[k]);
        GlobalRecord g;
        g.global_step = global_step;
        g.env_step = t;
        g.goals = plan.goals;
        g.decision = std::move(plan.decision);
        if (cfg.log_graphs) g.graph = graph_snapshot(merged);
        g.stats = stats;
        g.main_nodes = static_cast<int>(merged.mains.size());
        g.active_ghosts = static_cast<int>(merged.active_ghost_count());
        if (hooks.on_global) hooks.on_global(g);
        log.globals.push_back(std::move(g));
        ++global_step;
      }
      std::vector<Action> actions(n);
      for (std::size_t k = 0; k < n; ++k)
        actions[k] = followers[k].act(state.observations[k].pose_estimate, state.explored[k],
                                      state.explored[k].optimistic_grid(), cfg.local);
      state = world.step(std::move(state), actions);
      tick_all();
      stats = record(std::move(actions));
      if (cfg.stop_at_target && stats.coverage >= cfg.target_coverage) {
        log.end_reason = "target_reached";
        break;
      }
    } catch (const ExplorationComplete&) {
      throw;
    } catch (const Error& e) {
      throw Error("step " + std::to_string(t) + ": " + e.what());
    }
  }
  if (log.end_reason == "horizon" && stats.union_cells >= stats.explorable_cells) log.end_reason = "full_coverage";
  log.metrics = compute_metrics(log);
  return log;
}

// ---------------------------------------------------------------------------
// Serialisation (line-delimited JSON)

inline nlohmann::json config_json(const EpisodeConfig& c) {
  return {{"n_agents", c.n_agents},
          {"horizon", c.horizon},
          {"global_interval", c.global_interval},
          {"target_coverage", c.target_coverage},
          {"replan_on_idle", c.replan_on_idle},
          {"log_graphs", c.log_graphs},
          {"stop_at_target", c.stop_at_target},
          {"sim",
           {{"forward_step", c.sim.forward_step}, {"turn_deg", c.sim.turn_deg}, {"sensor_range", c.sim.sensor_range},
            {"signature_rays", c.sim.signature_rays}, {"visibility_rays", c.sim.visibility_rays},
            {"sigma_pos", c.sim.sigma_pos}, {"sigma_heading_deg", c.sim.sigma_heading_deg},
            {"action_noise", c.sim.action_noise}, {"spawn_radius", c.sim.spawn_radius}, {"horizon", c.sim.horizon}}},
          {"mapper",
           {{"similarity_threshold", c.mapper.similarity_threshold}, {"ghost_radius", c.mapper.ghost_radius},
            {"ghosts_per_main", c.mapper.ghosts_per_main}, {"ratio_edge", c.mapper.ratio_edge},
            {"abs_edge", c.mapper.abs_edge}, {"dedup_radius", c.mapper.dedup_radius},
            {"pass_radius", c.mapper.pass_radius}, {"merge_radius", c.mapper.merge_radius},
            {"no_distance", c.mapper.no_distance}}},
          {"local",
           {{"turn_threshold_deg", c.local.turn_threshold_deg}, {"arrival_radius", c.local.arrival_radius},
            {"lookahead", c.local.lookahead}, {"forward_step", c.local.forward_step}}}};
}

inline EpisodeConfig config_from_json(const nlohmann::json& j) {
  EpisodeConfig c;
  c.n_agents = j.at("n_agents").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.global_interval = j.at("global_interval").get<int>();
  c.target_coverage = j.at("target_coverage").get<double>();
  c.replan_on_idle = j.at("replan_on_idle").get<bool>();
  c.log_graphs = j.at("log_graphs").get<bool>();
  c.stop_at_target = j.value("stop_at_target", false);
  const auto& s = j.at("sim");
  c.sim.forward_step = s.at("forward_step").get<double>();
  c.sim.turn_deg = s.at("turn_deg").get<double>();
  c.sim.sensor_range = s.at("sensor_range").get<double>();
  c.sim.signature_rays = s.at("signature_rays").get<int>();
  c.sim.visibility_rays = s.at("visibility_rays").get<int>();
  c.sim.sigma_pos = s.at("sigma_pos").get<double>();
  c.sim.sigma_heading_deg = s.at("sigma_heading_deg").get<double>();
  c.sim.action_noise = s.at("action_noise").get<double>();
  c.sim.spawn_radius = s.at("spawn_radius").get<double>();
  c.sim.horizon = s.at("horizon").get<int>();
  const auto& m = j.at("mapper");
  c.mapper.similarity_threshold = m.at("similarity_threshold").get<double>();
  c.mapper.ghost_radius = m.at("ghost_radius").get<double>();
  c.mapper.ghosts_per_main = m.at("ghosts_per_main").get<int>();
  c.mapper.ratio_edge = m.at("ratio_edge").get<double>();
  c.mapper.abs_edge = m.at("abs_edge").get<double>();
  c.mapper.dedup_radius = m.at("dedup_radius").get<double>();
  c.mapper.pass_radius = m.at("pass_radius").get<double>();
  c.mapper.merge_radius = m.at("merge_radius").get<double>();
  c.mapper.no_distance = m.at("no_distance").get<bool>();
  const auto& l = j.at("local");
  c.local.turn_threshold_deg = l.at("turn_threshold_deg").get<double>();
  c.local.arrival_radius = l.at("arrival_radius").get<double>();
  c.local.lookahead = l.at("lookahead").get<int>();
  c.local.forward_step = l.at("forward_step").get<double>();
  return c;
}

inline nlohmann::json stats_json(const CoverageStats& s) {
  return {{"coverage", s.coverage}, {"union_cells", s.union_cells}, {"overlap_cells", s.overlap_cells},
          {"per_agent_cells", s.per_agent_cells}};
}

/// One JSON object per line: header, step records, global records (in
/// time order), then the metrics record.
inline std::string write_log(const EpisodeLog& log) {
  std::string out;
  auto line = [&](const nlohmann::json& j) {
    out += j.dump();
    out.push_back('\n');
  };
  line({{"type", "header"}, {"version", 1}, {"planner", log.planner}, {"seed", log.seed},
        {"config", config_json(log.config)}, {"map", log.map_text}});
  std::size_t gi = 0;
  for (const auto& s : log.steps) {
    while (gi < log.globals.size() && log.globals[gi].env_step < s.step) {
      const auto& g = log.globals[gi++];
      nlohmann::json goals = nlohmann::json::array();
      for (const auto& goal : g.goals) goals.push_back({{"x", goal.cell.x}, {"y", goal.cell.y}, {"ghost", goal.ghost_id}});
      line({{"type", "global"}, {"global_step", g.global_step}, {"t", g.env_step}, {"goals", goals},
            {"decision", g.decision}, {"stats", stats_json(g.stats)}, {"main_nodes", g.main_nodes},
            {"active_ghosts", g.active_ghosts}, {"graph", g.graph}});
    }
    nlohmann::json actions = nlohmann::json::array();
    for (Action a : s.actions) actions.push_back(action_name(a));
    nlohmann::json poses = nlohmann::json::array();
    for (const auto& p : s.poses) poses.push_back({p.x, p.y, p.heading});
    line({{"type", "step"}, {"t", s.step}, {"actions", actions}, {"poses", poses}, {"union_cells", s.cov.union_cells},
          {"overlap_cells", s.cov.overlap_cells}, {"explorable", s.cov.explorable}});
  }
  line({{"type", "metrics"}, {"end_reason", log.end_reason}, {"metrics", metrics_json(log.metrics)}});
  return out;
}

inline EpisodeLog read_log(const std::string& text) {
  EpisodeLog log;
  std::size_t pos = 0;
  bool header = false, metrics = false;
  int lineno = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("log line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        log.planner = j.at("planner").get<std::string>();
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config = config_from_json(j.at("config"));
        log.map_text = j.at("map").get<std::string>();
        header = true;
      } else if (type == "step") {
        StepRecord s;
        s.step = j.at("t").get<int>();
        for (const auto& a : j.at("actions")) s.actions.push_back(parse_action(a.get<std::string>()));
        for (const auto& p : j.at("poses")) s.poses.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        s.cov = {s.step, j.at("union_cells").get<std::size_t>(), j.at("overlap_cells").get<std::size_t>(),
                 j.at("explorable").get<std::size_t>()};
        log.steps.push_back(std::move(s));
      } else if (type == "global") {
        GlobalRecord g;
        g.global_step = j.at("global_step").get<int>();
        g.env_step = j.at("t").get<int>();
        for (const auto& goal : j.at("goals"))
          g.goals.push_back({{goal.at("x").get<int>(), goal.at("y").get<int>()}, goal.at("ghost").get<int>(), {}});
        g.decision = j.at("decision");
        g.graph = j.at("graph");
        g.stats.coverage = j.at("stats").at("coverage").get<double>();
        g.stats.union_cells = j.at("stats").at("union_cells").get<std::size_t>();
        g.stats.overlap_cells = j.at("stats").at("overlap_cells").get<std::size_t>();
        g.stats.per_agent_cells = j.at("stats").at("per_agent_cells").get<std::vector<std::size_t>>();
        g.main_nodes = j.at("main_nodes").get<int>();
        g.active_ghosts = j.at("active_ghosts").get<int>();
        log.globals.push_back(std::move(g));
      } else if (type == "metrics") {
        log.end_reason = j.at("end_reason").get<std::string>();
        log.metrics = metrics_from_json(j.at("metrics"));
        metrics = true;
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header || !metrics) throw FormatError("log is missing its header or metrics record");
  return log;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayResult {
  bool poses_match = true;
  int first_mismatch_step = -1;
  EpisodeMetrics metrics;  // recomputed from the replayed simulation
  bool metrics_match = false;
};

/// Re-simulates the logged actions from the logged map, config and seed,
/// checks every recorded pose bit-exactly, and recomputes the metrics.
inline ReplayResult replay(const EpisodeLog& log) {
  const GridWorld world(OccupancyGrid::from_text(log.map_text), log.config.sim);
  EpisodeState state = world.reset(log.config.n_agents, derive_seed(log.seed, 1));
  ReplayResult r;
  std::vector<CoverageSample> samples;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const StepRecord& rec = log.steps[i];
    if (i > 0) state = world.step(std::move(state), rec.actions);
    if (state.poses != rec.poses && r.poses_match) {
      r.poses_match = false;
      r.first_mismatch_step = rec.step;
    }
    samples.push_back(sample_of(state.step, world.coverage_stats(state)));
  }
  r.metrics = compute_metrics(samples, log.config.horizon, log.config.target_coverage);
  r.metrics_match = r.metrics == log.metrics;
  return r;
}

}  // namespace topex
