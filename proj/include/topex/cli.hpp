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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topex/config.hpp"
#include "topex/episode.hpp"
#include "topex/evaluation.hpp"
#include "topex/htp_planner.hpp"
#include "topex/nn.hpp"
#include "topex/rl_training.hpp"

// Command implementations behind the `topex` tool. Each writes its artifacts
// to the given paths and a short summary to `out`; none of them embed wall
// clock time, so identical inputs give identical files.

namespace topex::cli {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string indexed(const std::string& stem, int i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04d", i);
  return stem + buf + ext;
}

inline bool is_htp_name(const std::string& name) { return name == "htp" || name.rfind("htp_", 0) == 0; }

/// Planner by name. `htp` uses htp.variant; `htp_<variant>` overrides it.
/// HTP weights come from `checkpoint` when set.
struct PlannerSpec {
  std::shared_ptr<HtpNetwork> net;
  PlannerFactory factory;
};

inline std::shared_ptr<HtpNetwork> make_network(const ExperimentConfig& c, HtpConfig hc) {
  auto net = std::make_shared<HtpNetwork>(hc);
  if (!c.checkpoint.empty()) nn::load_checkpoint(net->params(), read_file(c.checkpoint));
  return net;
}

inline PlannerSpec planner_spec(const ExperimentConfig& c, const std::string& name) {
  PlannerSpec p;
  if (is_htp_name(name)) {
    HtpConfig hc = c.htp;
    if (name != "htp") hc.variant = parse_variant(name.substr(4));
    p.net = make_network(c, hc);
    auto net = p.net;
    p.factory = [net]() { return std::make_unique<HtpPlanner>(*net, false); };
  } else {
    make_baseline(name);  // validates the name
    p.factory = [name]() { return make_baseline(name); };
  }
  return p;
}

inline std::vector<GridWorld> eval_worlds(const ExperimentConfig& c) {
  return make_worlds(evaluation_maps(c), effective_episode(c).sim);
}

// ---------------------------------------------------------------------------

/// Writes map_NNNN.map files for the evaluation (or training) map set.
inline int gen_maps(const ExperimentConfig& c, const std::string& out_dir, bool train_split, std::ostream& out) {
  const MapSet& set = train_split ? c.train_maps : c.maps;
  const auto maps = set.build();
  for (std::size_t i = 0; i < maps.size(); ++i)
    write_file(std::filesystem::path(out_dir) / indexed("map", static_cast<int>(i), ".map"), maps[i].to_text());
  out << "wrote " << maps.size() << " maps (" << set.gen.width << "x" << set.gen.height << ") to " << out_dir << "\n";
  return 0;
}

/// One episode on map `map_index` with episode seed `episode_index`.
inline int run(const ExperimentConfig& c, const std::string& log_path, int map_index, int episode_index, std::ostream& out) {
  const auto worlds = eval_worlds(c);
  if (map_index < 0 || static_cast<std::size_t>(map_index) >= worlds.size())
    throw ConfigError("map index " + std::to_string(map_index) + " out of range");
  const PlannerSpec p = planner_spec(c, c.planner);
  auto planner = p.factory();
  const EpisodeLog log = run_episode(worlds[static_cast<std::size_t>(map_index)], effective_episode(c), *planner,
                                     episode_seed(c.seed, episode_index));
  write_file(log_path, write_log(log));
  out << planner->name() << ": steps " << log.metrics.steps << (log.metrics.reached ? "" : " (not reached)") << ", coverage "
      << log.metrics.coverage << ", mutual overlap " << log.metrics.mutual_overlap << ", end " << log.end_reason << "\n";
  return 0;
}

/// PPO training. Writes train.ndjson (header, one record per update, eval
/// records), checkpoint_NNNN.ckpt every trainer.checkpoint_every updates and
/// model.ckpt at the end.
inline int train(const ExperimentConfig& c, const std::string& out_dir, int eval_episodes, std::ostream& out) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  HtpNetwork net(c.htp);
  if (!c.checkpoint.empty()) nn::load_checkpoint(net.params(), read_file(c.checkpoint));
  nn::AdamState adam;
  TrainSetup s;
  s.episode = effective_episode(c);
  s.episode.stop_at_target = true;
  s.train_worlds = make_worlds(c.train_maps.build(), s.episode.sim);
  s.reward = effective_reward(c);
  s.trainer = c.trainer;
  const std::vector<GridWorld> evw = eval_worlds(c);
  const EpisodeConfig eval_cfg = effective_episode(c);

  std::string log;
  log += nlohmann::json({{"type", "header"}, {"config", config_text(c)}, {"parameters", net.params().scalar_count()}}).dump() + "\n";
  auto eval_record = [&](int it) {
    const MetricsReport r = evaluate(net, evw, eval_cfg, eval_episodes, c.seed, {}, c.workers);
    nlohmann::json j = report_json(r);
    j.erase("episodes");
    log += nlohmann::json({{"type", "eval"}, {"iteration", it}, {"report", j}}).dump() + "\n";
    out << "eval @" << it << ": steps " << format_mean_std(r.steps, 1) << "\n";
  };
  if (eval_episodes > 0) eval_record(0);
  const int every = std::max(1, c.trainer.checkpoint_every);
  topex::train(net, adam, s, [&](const IterationRecord& r) {
    log += iteration_json(r).dump() + "\n";
    const int done = r.iteration + 1;
    if (done % every == 0) {
      write_file(dir / indexed("checkpoint", done, ".ckpt"), nn::save_checkpoint(net.params()));
      if (eval_episodes > 0) eval_record(done);
    }
    if (done % 10 == 0) out << "update " << done << "/" << c.trainer.iterations << " mean reward " << r.mean_reward << "\n";
    return true;
  });
  write_file(dir / "model.ckpt", nn::save_checkpoint(net.params()));
  write_file(dir / "train.ndjson", log);
  out << "wrote " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

/// Evaluates `planner` over `episodes` paired episodes. Optional per-episode
/// logs go to log_dir/episode_NNNN.ndjson.
inline MetricsReport evaluate_named(const ExperimentConfig& c, const std::string& name, const std::string& log_dir = "") {
  const PlannerSpec p = planner_spec(c, name);
  std::function<void(int, const EpisodeLog&)> on_episode;
  if (!log_dir.empty()) {
    on_episode = [&](int i, const EpisodeLog& log) {
      write_file(std::filesystem::path(log_dir) / indexed("episode", i, ".ndjson"), write_log(log));
    };
  }
  return evaluate_planner(p.factory, eval_worlds(c), effective_episode(c), c.episodes, c.seed, on_episode, c.workers);
}

inline int eval(const ExperimentConfig& c, const std::string& report_path, const std::string& log_dir, std::ostream& out) {
  const MetricsReport r = evaluate_named(c, c.planner, log_dir);
  if (!report_path.empty()) write_file(report_path, report_json(r).dump(2) + "\n");
  out << reports_table({r});
  return 0;
}

inline int compare(const ExperimentConfig& c, const std::vector<std::string>& planners, const std::string& csv_path,
                   std::ostream& out) {
  if (planners.empty()) throw ConfigError("compare: at least one planner is required");
  std::vector<MetricsReport> rs;
  for (const auto& name : planners) {
    rs.push_back(evaluate_named(c, name));
    rs.back().planner = name;
  }
  if (!csv_path.empty()) write_file(csv_path, reports_csv(rs));
  out << reports_table(rs);
  return 0;
}

/// Re-simulates a log. Exit code 0 only when poses and metrics match.
inline int replay(const std::string& log_path, std::ostream& out) {
  const EpisodeLog log = read_log(read_file(log_path));
  const ReplayResult r = topex::replay(log);
  out << "poses " << (r.poses_match ? "match" : "differ at step " + std::to_string(r.first_mismatch_step)) << ", metrics "
      << (r.metrics_match ? "match" : "differ") << " (steps " << r.metrics.steps << ", coverage " << r.metrics.coverage
      << ", mutual overlap " << r.metrics.mutual_overlap << ")\n";
  return r.poses_match && r.metrics_match ? 0 : 1;
}

/// Map, per-agent trajectories, coverage curve and graph snapshots as JSON.
inline nlohmann::json plot_data(const EpisodeLog& log) {
  const OccupancyGrid grid = OccupancyGrid::from_text(log.map_text);
  nlohmann::json rows = nlohmann::json::array();
  std::istringstream lines(log.map_text);
  std::string row;
  std::getline(lines, row);  // header
  while (std::getline(lines, row)) rows.push_back(row);
  const std::size_t n = log.steps.empty() ? 0 : log.steps.front().poses.size();
  nlohmann::json traj = nlohmann::json::array();
  for (std::size_t k = 0; k < n; ++k) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& s : log.steps) pts.push_back({s.poses[k].x, s.poses[k].y, s.poses[k].heading});
    traj.push_back(pts);
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : log.steps) {
    const double overlap = s.cov.union_cells == 0 ? 0.0 : static_cast<double>(s.cov.overlap_cells) / static_cast<double>(s.cov.union_cells);
    curve.push_back({s.step, s.cov.coverage(), overlap});
  }
  nlohmann::json globals = nlohmann::json::array();
  for (const auto& g : log.globals) {
    nlohmann::json goals = nlohmann::json::array();
    for (const auto& goal : g.goals) goals.push_back({goal.cell.x, goal.cell.y});
    globals.push_back({{"t", g.env_step}, {"goals", goals}, {"graph", g.graph}});
  }
  return {{"planner", log.planner},
          {"map", {{"width", grid.width()}, {"height", grid.height()}, {"cell_size", grid.cell_size()}, {"rows", rows}}},
          {"trajectories", traj},
          {"coverage", {{"columns", {"t", "coverage", "mutual_overlap"}}, {"rows", curve}}},
          {"globals", globals},
          {"metrics", metrics_json(log.metrics)}};
}

inline int export_plot_data(const std::string& log_path, const std::string& out_path, std::ostream& out) {
  const EpisodeLog log = read_log(read_file(log_path));
  write_file(out_path, plot_data(log).dump() + "\n");
  out << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace topex::cli
