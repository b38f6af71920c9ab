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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topex/cli.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.overrides, "override, e.g. --set episode.horizon=600 (repeatable)");
}

topex::ExperimentConfig load(const Common& c) {
  topex::KeyValues kv;
  for (const auto& o : c.overrides) kv.push_back(topex::parse_override(o));
  return topex::load_config(c.config, kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topex: multi-agent topological exploration workbench"};
  app.require_subcommand(1);

  Common gen_c, run_c, train_c, eval_c, cmp_c;
  std::string out_dir = "maps", log_path = "episode.ndjson", train_dir = "train_out", report, log_dir, csv, replay_log, plot_log,
              plot_out = "plot.json";
  bool train_split = false;
  int map_index = 0, episode_index = 0, train_eval = 0;
  std::vector<std::string> planners;

  auto* gen = app.add_subcommand("gen-maps", "generate a map set as .map files");
  add_common(gen, gen_c);
  gen->add_option("-o,--out", out_dir, "output directory");
  gen->add_flag("--train", train_split, "generate the training split instead of the evaluation split");

  auto* run = app.add_subcommand("run", "run one episode and write its log");
  add_common(run, run_c);
  run->add_option("-o,--out", log_path, "episode log (line-delimited JSON)");
  run->add_option("--map", map_index, "index into the evaluation map set");
  run->add_option("--episode", episode_index, "episode index selecting the seed stream");

  auto* train = app.add_subcommand("train", "train the hierarchical planner with PPO");
  add_common(train, train_c);
  train->add_option("-o,--out", train_dir, "output directory for logs and checkpoints");
  train->add_option("--eval-episodes", train_eval, "greedy evaluation episodes at every checkpoint (0 disables)");

  auto* eval = app.add_subcommand("eval", "evaluate one planner");
  add_common(eval, eval_c);
  eval->add_option("-o,--out", report, "JSON report path");
  eval->add_option("--log-dir", log_dir, "write every episode log here");

  auto* cmp = app.add_subcommand("compare", "evaluate several planners on paired episodes");
  add_common(cmp, cmp_c);
  cmp->add_option("-p,--planners", planners, "planner names")->required()->delimiter(',');
  cmp->add_option("--csv", csv, "CSV summary path");

  auto* rep = app.add_subcommand("replay", "re-simulate a log and check poses and metrics");
  rep->add_option("log", replay_log, "episode log")->required()->check(CLI::ExistingFile);

  auto* plot = app.add_subcommand("export-plot-data", "export trajectories, coverage and graphs as JSON");
  plot->add_option("log", plot_log, "episode log")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out", plot_out, "output JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return topex::cli::gen_maps(load(gen_c), out_dir, train_split, std::cout);
    if (*run) return topex::cli::run(load(run_c), log_path, map_index, episode_index, std::cout);
    if (*train) return topex::cli::train(load(train_c), train_dir, train_eval, std::cout);
    if (*eval) return topex::cli::eval(load(eval_c), report, log_dir, std::cout);
    if (*cmp) return topex::cli::compare(load(cmp_c), planners, csv, std::cout);
    if (*rep) return topex::cli::replay(replay_log, std::cout);
    if (*plot) return topex::cli::export_plot_data(plot_log, plot_out, std::cout);
  } catch (const topex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
