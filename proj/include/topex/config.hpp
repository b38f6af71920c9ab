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

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "topex/common.hpp"
#include "topex/episode.hpp"
#include "topex/evaluation.hpp"
#include "topex/htp_planner.hpp"
#include "topex/mapgen.hpp"
#include "topex/rl_training.hpp"

namespace topex {

/// Everything a CLI command needs. Read from `key = value` text with
/// optional `[section]` headers that prefix the keys below them.
struct ExperimentConfig {
  MapTier tier = MapTier::Middle;
  MapSet maps;        // evaluation maps
  MapSet train_maps;  // training maps
  std::string maps_dir;  // when set, evaluation maps are loaded from *.map files here
  EpisodeConfig episode;
  bool noise = true;
  std::string planner = "nearest_ghost";
  std::string checkpoint;  // HTP weights; empty means random init
  HtpConfig htp;
  RewardConfig reward;
  TrainerConfig trainer;
  std::uint64_t seed = 1;
  int episodes = 10;
  int workers = 1;

  ExperimentConfig() {
    maps.gen = MapGenConfig::for_tier(tier);
    maps.count = 20;
    maps.seed = 1000;
    train_maps = maps;
    train_maps.count = 50;
    train_maps.seed = 2000;
    episode.horizon = tier_horizon(tier);
  }
};

namespace detail {

inline long long parse_ll(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline int parse_int(const std::string& key, const std::string& v) { return static_cast<int>(parse_ll(key, v)); }

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || *end != '\0' || errno != 0)
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return x;
}

inline double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Binding {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline void add_mapgen(std::vector<Binding>& b, const std::string& p, MapSet& m) {
  auto i = [&](const std::string& k, int& ref) {
    b.push_back({p + k, [&ref, key = p + k](const std::string& v) { ref = parse_int(key, v); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto d = [&](const std::string& k, double& ref) {
    b.push_back({p + k, [&ref, key = p + k](const std::string& v) { ref = parse_double(key, v); },
                 [&ref] { return fmt(ref); }});
  };
  i("count", m.count);
  b.push_back({p + "seed", [&m, key = p + "seed"](const std::string& v) { m.seed = parse_u64(key, v); },
               [&m] { return std::to_string(m.seed); }});
  i("width", m.gen.width);
  i("height", m.gen.height);
  d("cell_size", m.gen.cell_size);
  i("rooms", m.gen.rooms);
  i("min_room", m.gen.min_room);
  i("max_room", m.gen.max_room);
  i("min_corridor", m.gen.min_corridor);
  i("max_corridor", m.gen.max_corridor);
  d("loop_chance", m.gen.loop_chance);
  i("pillars", m.gen.pillars);
  i("max_attempts", m.gen.max_attempts);
  d("min_free_fraction", m.gen.min_free_fraction);
}

/// Every configurable key, bound to `c`. Order matters only for dumps.
inline std::vector<Binding> bindings(ExperimentConfig& c) {
  std::vector<Binding> b;
  auto i = [&](const std::string& k, int& ref) {
    b.push_back({k, [&ref, k](const std::string& v) { ref = parse_int(k, v); }, [&ref] { return std::to_string(ref); }});
  };
  auto d = [&](const std::string& k, double& ref) {
    b.push_back({k, [&ref, k](const std::string& v) { ref = parse_double(k, v); }, [&ref] { return fmt(ref); }});
  };
  auto f = [&](const std::string& k, bool& ref) {
    b.push_back({k, [&ref, k](const std::string& v) { ref = parse_bool(k, v); },
                 [&ref] { return std::string(ref ? "true" : "false"); }});
  };
  auto s = [&](const std::string& k, std::string& ref) {
    b.push_back({k, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }});
  };
  auto u = [&](const std::string& k, std::uint64_t& ref) {
    b.push_back({k, [&ref, k](const std::string& v) { ref = parse_u64(k, v); }, [&ref] { return std::to_string(ref); }});
  };

  u("seed", c.seed);
  i("episodes", c.episodes);
  i("workers", c.workers);
  s("planner", c.planner);
  s("checkpoint", c.checkpoint);
  f("noise", c.noise);
  b.push_back({"maps.tier",
               [&c](const std::string& v) {
                 c.tier = parse_tier(v);
                 c.maps.gen.width = c.maps.gen.height = tier_size(c.tier);
                 c.train_maps.gen.width = c.train_maps.gen.height = tier_size(c.tier);
                 c.episode.horizon = tier_horizon(c.tier);
               },
               [&c] { return std::string(tier_name(c.tier)); }});
  s("maps.dir", c.maps_dir);
  add_mapgen(b, "maps.", c.maps);
  add_mapgen(b, "train_maps.", c.train_maps);

  i("episode.n_agents", c.episode.n_agents);
  i("episode.horizon", c.episode.horizon);
  i("episode.global_interval", c.episode.global_interval);
  d("episode.target_coverage", c.episode.target_coverage);
  f("episode.replan_on_idle", c.episode.replan_on_idle);
  f("episode.log_graphs", c.episode.log_graphs);

  SimConfig& sim = c.episode.sim;
  d("sim.forward_step", sim.forward_step);
  d("sim.turn_deg", sim.turn_deg);
  d("sim.sensor_range", sim.sensor_range);
  i("sim.signature_rays", sim.signature_rays);
  i("sim.visibility_rays", sim.visibility_rays);
  d("sim.sigma_pos", sim.sigma_pos);
  d("sim.sigma_heading_deg", sim.sigma_heading_deg);
  d("sim.action_noise", sim.action_noise);
  d("sim.spawn_radius", sim.spawn_radius);

  MapperConfig& mp = c.episode.mapper;
  d("mapper.similarity_threshold", mp.similarity_threshold);
  d("mapper.ghost_radius", mp.ghost_radius);
  i("mapper.ghosts_per_main", mp.ghosts_per_main);
  d("mapper.ratio_edge", mp.ratio_edge);
  d("mapper.abs_edge", mp.abs_edge);
  d("mapper.dedup_radius", mp.dedup_radius);
  d("mapper.pass_radius", mp.pass_radius);
  d("mapper.merge_radius", mp.merge_radius);
  f("mapper.no_distance", mp.no_distance);

  LocalConfig& lc = c.episode.local;
  d("local.turn_threshold_deg", lc.turn_threshold_deg);
  d("local.arrival_radius", lc.arrival_radius);
  i("local.lookahead", lc.lookahead);
  d("local.forward_step", lc.forward_step);

  i("htp.embed_dim", c.htp.embed_dim);
  i("htp.hidden", c.htp.hidden);
  i("htp.history", c.htp.history);
  u("htp.init_seed", c.htp.init_seed);
  b.push_back({"htp.variant", [&c](const std::string& v) { c.htp.variant = parse_variant(v); },
               [&c] { return std::string(variant_name(c.htp.variant)); }});

  d("reward.w_cov", c.reward.w_cov);
  d("reward.w_suc", c.reward.w_suc);
  d("reward.w_o", c.reward.w_o);
  d("reward.w_t", c.reward.w_t);

  TrainerConfig& t = c.trainer;
  d("trainer.gamma", t.gamma);
  d("trainer.gae_lambda", t.gae_lambda);
  d("trainer.clip", t.clip);
  i("trainer.epochs", t.epochs);
  i("trainer.minibatch", t.minibatch);
  d("trainer.lr", t.lr);
  d("trainer.entropy_coef", t.entropy_coef);
  d("trainer.value_coef", t.value_coef);
  d("trainer.max_grad_norm", t.max_grad_norm);
  i("trainer.rollout_length", t.rollout_length);
  i("trainer.iterations", t.iterations);
  i("trainer.checkpoint_every", t.checkpoint_every);
  u("trainer.seed", t.seed);
  return b;
}

}  // namespace detail

/// Ordered key/value pairs; later entries win.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(std::move(key), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

/// `key=value` override flag.
inline std::pair<std::string, std::string> parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "': expected key=value");
  return {detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
}

/// Applies pairs in order. `maps.tier` resets sizes and the horizon, so it
/// is applied first whatever its position.
inline void apply_key_values(ExperimentConfig& c, const KeyValues& kv) {
  auto binds = detail::bindings(c);
  std::map<std::string, const detail::Binding*> by_key;
  for (const auto& b : binds) by_key[b.key] = &b;
  for (const auto& [k, v] : kv)
    if (k == "maps.tier") by_key.at(k)->set(v);
  for (const auto& [k, v] : kv) {
    const auto it = by_key.find(k);
    if (it == by_key.end()) throw ConfigError("unknown config key '" + k + "'");
    if (k != "maps.tier") it->second->set(v);
  }
}

/// The episode config with the noise toggle applied.
inline EpisodeConfig effective_episode(const ExperimentConfig& c) {
  EpisodeConfig e = c.episode;
  e.sim.horizon = e.horizon;
  if (!c.noise) {
    e.sim.sigma_pos = 0.0;
    e.sim.sigma_heading_deg = 0.0;
    e.sim.action_noise = 0.0;
  }
  return e;
}

/// Reward config sharing the episode's coverage target.
inline RewardConfig effective_reward(const ExperimentConfig& c) {
  RewardConfig r = c.reward;
  r.target_coverage = c.episode.target_coverage;
  return r;
}

inline void validate(const ExperimentConfig& c) {
  if (c.episodes < 0) throw ConfigError("episodes must be >= 0");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.episode.n_agents < 1) throw ConfigError("episode.n_agents must be >= 1");
  if (c.episode.horizon < 0) throw ConfigError("episode.horizon must be >= 0");
  if (c.episode.global_interval < 1) throw ConfigError("episode.global_interval must be >= 1");
  if (c.maps.count < 1 || c.train_maps.count < 1) throw ConfigError("map counts must be >= 1");
  if (!c.maps_dir.empty() && !std::filesystem::is_directory(c.maps_dir))
    throw ConfigError("maps.dir '" + c.maps_dir + "' is not a directory");
  if (!c.checkpoint.empty() && !std::filesystem::exists(c.checkpoint))
    throw ConfigError("checkpoint '" + c.checkpoint + "' does not exist");
  effective_reward(c).validate();
  c.trainer.validate();
}

inline ExperimentConfig load_config(const std::string& path, const KeyValues& overrides = {}) {
  ExperimentConfig c;
  KeyValues kv;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    kv = parse_key_values(ss.str());
  }
  kv.insert(kv.end(), overrides.begin(), overrides.end());
  apply_key_values(c, kv);
  validate(c);
  return c;
}

/// Canonical dump; parsing it back yields an equal configuration.
inline std::string config_text(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  std::string out;
  for (const auto& b : detail::bindings(copy)) out += b.key + " = " + b.get() + "\n";
  return out;
}

/// *.map files in name order.
inline std::vector<OccupancyGrid> load_map_dir(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".map") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("maps.dir '" + dir + "' holds no .map files");
  std::vector<OccupancyGrid> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    out.push_back(OccupancyGrid::from_text(ss.str()));
  }
  return out;
}

inline std::vector<OccupancyGrid> evaluation_maps(const ExperimentConfig& c) {
  return c.maps_dir.empty() ? c.maps.build() : load_map_dir(c.maps_dir);
}

}  // namespace topex
