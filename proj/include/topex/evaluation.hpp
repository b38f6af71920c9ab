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
#include <cstdio>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "topex/episode.hpp"
#include "topex/mapgen.hpp"

namespace topex {

/// A list of generated maps. Map i comes from derive_seed(seed, i).
struct MapSet {
  MapGenConfig gen;
  int count = 1;
  std::uint64_t seed = 0;

  std::vector<OccupancyGrid> build() const {
    std::vector<OccupancyGrid> out;
    out.reserve(static_cast<std::size_t>(std::max(0, count)));
    for (int i = 0; i < count; ++i) out.push_back(generate_map(gen, derive_seed(seed, static_cast<std::uint64_t>(i))));
    return out;
  }
};

inline std::vector<GridWorld> make_worlds(const std::vector<OccupancyGrid>& maps, const SimConfig& sim) {
  std::vector<GridWorld> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.emplace_back(m, sim);
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(v / static_cast<double>(xs.size()));
  return r;
}

struct MetricsReport {
  std::string planner;
  std::vector<EpisodeMetrics> episodes;
  MeanStd steps, coverage, mutual_overlap;
  int reached = 0;

  void aggregate() {
    std::vector<double> s, c, o;
    reached = 0;
    for (const auto& e : episodes) {
      s.push_back(e.steps);
      c.push_back(e.coverage);
      o.push_back(e.mutual_overlap);
      reached += e.reached ? 1 : 0;
    }
    steps = mean_std(s);
    coverage = mean_std(c);
    mutual_overlap = mean_std(o);
  }
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes) eps.push_back(metrics_json(e));
  auto ms = [](const MeanStd& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  return {{"planner", r.planner},       {"episodes", eps},
          {"steps", ms(r.steps)},       {"coverage", ms(r.coverage)},
          {"mutual_overlap", ms(r.mutual_overlap)}, {"reached", r.reached}};
}

/// Seed of episode i. Shared by every planner so comparisons are paired.
inline std::uint64_t episode_seed(std::uint64_t seed, int i) { return derive_seed(seed, 0x45500000u + static_cast<std::uint64_t>(i)); }

using PlannerFactory = std::function<std::unique_ptr<GlobalPlanner>()>;

/// Episode i runs on worlds[i % size] with episode_seed(seed, i). With
/// several workers each builds its own planner; results are stored by episode
/// index, so the report does not depend on the worker count. `on_episode` may
/// be called from worker threads.
inline MetricsReport evaluate_planner(const PlannerFactory& make, const std::vector<GridWorld>& worlds, const EpisodeConfig& cfg,
                                      int episodes, std::uint64_t seed,
                                      const std::function<void(int, const EpisodeLog&)>& on_episode = {}, int workers = 1) {
  MetricsReport r;
  r.planner = make()->name();
  if (episodes <= 0) return r;
  if (worlds.empty()) throw ConfigError("evaluate: empty map set");
  r.episodes.resize(static_cast<std::size_t>(episodes));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&]() {
    try {
      auto planner = make();
      for (int i = next++; i < episodes; i = next++) {
        const EpisodeLog log =
            run_episode(worlds[static_cast<std::size_t>(i) % worlds.size()], cfg, *planner, episode_seed(seed, i));
        r.episodes[static_cast<std::size_t>(i)] = log.metrics;
        if (on_episode) on_episode(i, log);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = episodes;
    }
  };
  const int n = std::clamp(workers, 1, episodes);
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  r.aggregate();
  return r;
}

inline std::string format_mean_std(const MeanStd& m, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f (%.*f)", precision, m.mean, precision, m.std);
  return buf;
}

/// "planner,steps_mean,steps_std,..." rows.
inline std::string reports_csv(const std::vector<MetricsReport>& rs) {
  std::string out = "planner,episodes,reached,steps_mean,steps_std,coverage_mean,coverage_std,overlap_mean,overlap_std\n";
  char buf[512];
  for (const auto& r : rs) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.planner.c_str(), r.episodes.size(), r.reached,
                  r.steps.mean, r.steps.std, r.coverage.mean, r.coverage.std, r.mutual_overlap.mean, r.mutual_overlap.std);
    out += buf;
  }
  return out;
}

inline std::string reports_table(const std::vector<MetricsReport>& rs) {
  std::size_t w = 7;
  for (const auto& r : rs) w = std::max(w, r.planner.size());
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-*s  %-18s  %-16s  %-16s  %s\n", static_cast<int>(w), "planner", "Steps", "Coverage",
                "Mutual Overlap", "reached");
  out += buf;
  for (const auto& r : rs) {
    std::snprintf(buf, sizeof(buf), "%-*s  %-18s  %-16s  %-16s  %d/%zu\n", static_cast<int>(w), r.planner.c_str(),
                  format_mean_std(r.steps, 1).c_str(), format_mean_std(r.coverage, 3).c_str(),
                  format_mean_std(r.mutual_overlap, 3).c_str(), r.reached, r.episodes.size());
    out += buf;
  }
  return out;
}

}  // namespace topex
