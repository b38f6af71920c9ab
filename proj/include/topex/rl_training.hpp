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
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "topex/common.hpp"
#include "topex/episode.hpp"
#include "topex/evaluation.hpp"
#include "topex/htp_planner.hpp"
#include "topex/nn.hpp"

namespace topex {

// ---------------------------------------------------------------------------
// Reward

struct RewardConfig {
  double w_cov = 0.02;   // per m^2 newly explored
  double w_suc = 1.0;    // once, when the target coverage is first reached
  double w_o = 0.01;     // per m^2 of new overlap
  double w_t = 0.002;    // per nominal global step below target
  double target_coverage = 0.9;

  void validate() const {
    if (!(w_cov > 0.0) || !(w_suc > 0.0)) throw ConfigError("reward: w_cov and w_suc must be positive");
    if (w_o < 0.0 || w_t < 0.0) throw ConfigError("reward: w_o and w_t must be non-negative");
    if (!(target_coverage > 0.0 && target_coverage <= 1.0)) throw ConfigError("reward: target_coverage must be in (0, 1]");
  }
};

struct RewardTerms {
  double coverage = 0.0;
  double success = 0.0;
  double overlap = 0.0;  // already negated
  double time = 0.0;     // already negated
  double total() const { return coverage + success + overlap + time; }
};

inline RewardTerms reward_terms(const CoverageStats& prev, const CoverageStats& next, const RewardConfig& cfg) {
  const double area = next.cell_area;
  const double d_area = (static_cast<double>(next.union_cells) - static_cast<double>(prev.union_cells)) * area;
  const double d_overlap = (static_cast<double>(next.overlap_cells) - static_cast<double>(prev.overlap_cells)) * area;
  RewardTerms r;
  r.coverage = cfg.w_cov * d_area;
  r.overlap = -cfg.w_o * d_overlap;
  r.time = next.coverage < cfg.target_coverage ? -cfg.w_t : 0.0;
  r.success = prev.coverage < cfg.target_coverage && next.coverage >= cfg.target_coverage ? cfg.w_suc : 0.0;
  return r;
}

inline double compute_reward(const CoverageStats& prev, const CoverageStats& next, const RewardConfig& cfg) {
  return reward_terms(prev, next, cfg).total();
}

// ---------------------------------------------------------------------------
// Rollouts

struct TrainerConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 32;
  double lr = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int rollout_length = 64;  // transitions per update
  int iterations = 200;
  int checkpoint_every = 50;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("trainer: gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("trainer: gae_lambda must be in [0, 1]");
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("trainer: clip must be in (0, 1)");
    if (epochs < 1 || minibatch < 1 || rollout_length < 1) throw ConfigError("trainer: epochs, minibatch, rollout_length >= 1");
    if (!(lr > 0.0)) throw ConfigError("trainer: lr must be positive");
  }
};

/// One HTP decision. `reward` sums every global step from this decision up
/// to the next one, including steps handled by the frontier fallback.
/// `duration` is the elapsed time in nominal global steps; the discount to
/// the next transition is gamma^duration.
struct Transition {
  PlannerInput input;
  std::vector<int> actions;
  std::vector<double> log_probs;
  double reward = 0.0;
  double duration = 1.0;
  double value = 0.0;
  bool done = false;
  int env_step = 0;
  int episode = 0;
};

struct RolloutBuffer {
  std::vector<Transition> transitions;
  double bootstrap_value = 0.0;  // V of the state after the last transition when it is not terminal
  int episodes = 0;
  std::vector<EpisodeMetrics> metrics;  // of the episodes that finished inside the rollout

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
};

/// Per-episode transitions from a sampled HTP run.
inline std::vector<Transition> episode_transitions(const GridWorld& world, const EpisodeConfig& cfg, const HtpNetwork& net,
                                                   const RewardConfig& rc, std::uint64_t seed, EpisodeMetrics* metrics = nullptr,
                                                   const ForwardOptions& opt = {}) {
  HtpPlanner planner(net, true, opt);
  struct AtGlobal {
    int env_step;
    CoverageStats stats;
  };
  std::vector<AtGlobal> at_global;
  EpisodeHooks hooks;
  hooks.on_global = [&](const GlobalRecord& g) { at_global.push_back({g.env_step, g.stats}); };
  EpisodeConfig c = cfg;
  c.log_graphs = false;
  const EpisodeLog log = run_episode(world, c, planner, seed, hooks);
  if (metrics) *metrics = log.metrics;

  const CoverageSample& last = log.steps.back().cov;
  CoverageStats end;
  end.explorable_cells = last.explorable;
  end.union_cells = last.union_cells;
  end.overlap_cells = last.overlap_cells;
  end.coverage = last.coverage();
  end.cell_area = world.grid().cell_size() * world.grid().cell_size();
  const int end_step = log.steps.back().step;
  // A global step may end early (idle replanning); the time penalty and the
  // discount are charged per env step relative to the nominal interval.
  std::vector<double> step_reward(at_global.size()), step_span(at_global.size());
  for (std::size_t j = 0; j < at_global.size(); ++j) {
    const bool more = j + 1 < at_global.size();
    const CoverageStats& next = more ? at_global[j + 1].stats : end;
    const int span = (more ? at_global[j + 1].env_step : end_step) - at_global[j].env_step;
    step_span[j] = static_cast<double>(span) / static_cast<double>(cfg.global_interval);
    const RewardTerms r = reward_terms(at_global[j].stats, next, rc);
    step_reward[j] = r.coverage + r.overlap + r.success + r.time * step_span[j];
  }

  std::vector<Transition> out;
  const auto& ds = planner.decisions();
  for (std::size_t d = 0; d < ds.size(); ++d) {
    Transition t;
    t.duration = 0.0;
    t.input = ds[d].input;
    t.actions = ds[d].output.choice;
    t.log_probs = ds[d].output.log_prob;
    t.value = ds[d].output.value;
    t.env_step = log.globals[static_cast<std::size_t>(ds[d].global_step)].env_step;
    const int from = ds[d].global_step;
    const int to = d + 1 < ds.size() ? ds[d + 1].global_step : static_cast<int>(step_reward.size());
    for (int j = from; j < to; ++j) {
      t.reward += step_reward[static_cast<std::size_t>(j)];
      t.duration += step_span[static_cast<std::size_t>(j)];
    }
    t.done = d + 1 == ds.size();
    out.push_back(std::move(t));
  }
  return out;
}

/// Runs whole sampled episodes round-robin over `worlds` until `length`
/// transitions are collected; the tail of the last episode is cut and its
/// value bootstraps the return.
inline RolloutBuffer collect_rollout(const std::vector<GridWorld>& worlds, const EpisodeConfig& cfg, const HtpNetwork& net,
                                     const RewardConfig& rc, std::size_t length, std::uint64_t seed, int first_episode = 0) {
  if (worlds.empty()) throw ConfigError("collect_rollout: no environments");
  RolloutBuffer buf;
  int e = first_episode;
  // Episodes with no ghost decision at all contribute nothing; the cap keeps
  // a degenerate map set from looping forever.
  int empty_streak = 0;
  while (buf.size() < length && empty_streak < 16) {
    EpisodeMetrics m;
    auto ts = episode_transitions(worlds[static_cast<std::size_t>(e) % worlds.size()], cfg, net, rc,
                                  derive_seed(seed, static_cast<std::uint64_t>(e)), &m);
    empty_streak = ts.empty() ? empty_streak + 1 : 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ts[i].episode = e;
      if (buf.size() == length) {
        buf.bootstrap_value = ts[i].value;
        break;
      }
      buf.transitions.push_back(std::move(ts[i]));
    }
    if (buf.size() < length || buf.transitions.back().done) buf.metrics.push_back(m);
    ++buf.episodes;
    ++e;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Advantages

struct Advantages {
  std::vector<double> advantages;  // raw, unnormalised
  std::vector<double> returns;     // advantage + value
};

inline Advantages gae_advantages(const RolloutBuffer& buf, double gamma, double lambda) {
  const std::size_t n = buf.size();
  Advantages a;
  a.advantages.assign(n, 0.0);
  a.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& t = buf.transitions[i];
    double next_value = 0.0;
    if (!t.done) next_value = i + 1 < n ? buf.transitions[i + 1].value : buf.bootstrap_value;
    const double keep = t.done ? 0.0 : 1.0;
    const double g = std::pow(gamma, t.duration);
    const double delta = t.reward + g * next_value - t.value;
    next_adv = delta + g * lambda * keep * next_adv;
    a.advantages[i] = next_adv;
    a.returns[i] = next_adv + t.value;
  }
  return a;
}

inline std::vector<double> normalize_advantages(std::vector<double> a) {
  if (a.size() < 2) return a;
  const MeanStd ms = mean_std(a);
  for (double& x : a) x = (x - ms.mean) / (ms.std + 1e-8);
  return a;
}

// ---------------------------------------------------------------------------
// PPO

/// min(r A, clip(r, 1 - eps, 1 + eps) A).
inline double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

struct PolicyEval {
  std::vector<nn::Tensor> log_probs;  // 1 x 1 per agent
  std::vector<nn::Tensor> entropies;  // 1 x 1 per agent
  nn::Tensor value;
};

/// Differentiable log-probabilities of stored actions. Rows whose
/// hierarchical product vanished fall back to the ghost scores, as in
/// select_goals.
inline PolicyEval evaluate_actions(const HtpNetwork& net, const PlannerInput& in, const std::vector<int>& actions,
                                   const ForwardOptions& opt = {}) {
  using namespace nn;
  const HtpForward f = net.forward(in, opt);
  const int g = f.probs.cols();
  PolicyEval out;
  out.value = f.value;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    const int r = static_cast<int>(k);
    double total = 0.0;
    for (int j = 0; j < g; ++j) total += f.probs(r, j);
    const Tensor row = gather_rows(total > 0.0 ? f.probs : f.ghost_scores, {r});
    const Tensor logs = log(clamp(row, 1e-12, 1.0));
    out.log_probs.push_back(gather_cols(logs, {actions[k]}));
    out.entropies.push_back(scale(sum(mul(row, logs)), -1.0));
  }
  return out;
}

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

inline nlohmann::json ppo_stats_json(const PpoStats& s) {
  return {{"policy_loss", s.policy_loss}, {"value_loss", s.value_loss}, {"entropy", s.entropy},
          {"approx_kl", s.approx_kl},     {"clip_fraction", s.clip_fraction}, {"minibatches", s.minibatches}};
}

/// Clipped-surrogate update of the shared parameters, one optimiser step per
/// minibatch. Stats are averaged over the last epoch.
inline PpoStats ppo_update(HtpNetwork& net, nn::AdamState& adam, const RolloutBuffer& buf, const TrainerConfig& cfg,
                           std::uint64_t seed, const ForwardOptions& opt = {}) {
  using namespace nn;
  cfg.validate();
  if (buf.empty()) throw ConfigError("ppo_update: empty buffer");
  const Advantages adv = gae_advantages(buf, cfg.gamma, cfg.gae_lambda);
  const std::vector<double> a_norm = normalize_advantages(adv.advantages);
  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.max_grad_norm = cfg.max_grad_norm;
  Rng rng(seed);
  std::vector<std::size_t> order(buf.size());
  PpoStats st;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    PpoStats ep;
    double samples = 0.0, agents_seen = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.minibatch));
      const double inv = 1.0 / static_cast<double>(e - b);
      net.params().zero_grad();
      for (std::size_t q = b; q < e; ++q) {
        const Transition& t = buf.transitions[order[q]];
        const PolicyEval pe = evaluate_actions(net, t.input, t.actions, opt);
        const double inv_agents = 1.0 / static_cast<double>(std::max<std::size_t>(1, t.actions.size()));
        const double A = a_norm[order[q]];
        Tensor loss = Tensor::scalar(0.0);
        for (std::size_t k = 0; k < t.actions.size(); ++k) {
          const Tensor ratio = exp(add_scalar(pe.log_probs[k], -t.log_probs[k]));
          const Tensor surr = minimum(scale(ratio, A), scale(clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), A));
          loss = add(loss, scale(surr, -inv_agents));
          loss = add(loss, scale(pe.entropies[k], -cfg.entropy_coef * inv_agents));
          const double r = ratio.item();
          ep.policy_loss += -clipped_surrogate(r, A, cfg.clip) * inv_agents;
          ep.entropy += pe.entropies[k].item() * inv_agents;
          ep.approx_kl += (t.log_probs[k] - pe.log_probs[k].item());
          ep.clip_fraction += std::abs(r - 1.0) > cfg.clip ? 1.0 : 0.0;
          agents_seen += 1.0;
        }
        const Tensor verr = add_scalar(pe.value, -adv.returns[order[q]]);
        const Tensor vloss = mul(verr, verr);
        loss = add(loss, scale(vloss, cfg.value_coef));
        ep.value_loss += vloss.item();
        if (!std::isfinite(loss.item())) throw TrainingDivergence("ppo_update: non-finite loss");
        scale(loss, inv).backward();
        samples += 1.0;
      }
      optimizer_step(net.params(), adam, ac);
      ++ep.minibatches;
    }
    ep.policy_loss /= samples;
    ep.value_loss /= samples;
    ep.entropy /= samples;
    ep.approx_kl /= std::max(1.0, agents_seen);
    ep.clip_fraction /= std::max(1.0, agents_seen);
    st = ep;
    st.minibatches = ep.minibatches * cfg.epochs;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Training loop and evaluation

struct TrainSetup {
  std::vector<GridWorld> train_worlds;
  EpisodeConfig episode;
  RewardConfig reward;
  TrainerConfig trainer;
  ForwardOptions forward;
};

struct IterationRecord {
  int iteration = 0;
  PpoStats ppo;
  std::size_t transitions = 0;
  double mean_reward = 0.0;
  int episodes = 0;
  double mean_steps = 0.0;  // of episodes finished in this rollout; 0 when none
};

inline nlohmann::json iteration_json(const IterationRecord& r) {
  return {{"type", "update"},           {"iteration", r.iteration},     {"transitions", r.transitions},
          {"mean_reward", r.mean_reward}, {"episodes", r.episodes},     {"mean_steps", r.mean_steps},
          {"ppo", ppo_stats_json(r.ppo)}};
}

/// `on_iteration` receives each record; returning false stops training.
inline std::vector<IterationRecord> train(HtpNetwork& net, nn::AdamState& adam, const TrainSetup& s,
                                          const std::function<bool(const IterationRecord&)>& on_iteration = {},
                                          int start_iteration = 0) {
  s.reward.validate();
  s.trainer.validate();
  EpisodeConfig cfg = s.episode;
  cfg.target_coverage = s.reward.target_coverage;
  std::vector<IterationRecord> out;
  int episode = 0;
  for (int it = start_iteration; it < s.trainer.iterations; ++it) {
    const std::uint64_t it_seed = derive_seed(s.trainer.seed, static_cast<std::uint64_t>(it));
    const RolloutBuffer buf = collect_rollout(s.train_worlds, cfg, net, s.reward,
                                              static_cast<std::size_t>(s.trainer.rollout_length), derive_seed(it_seed, 1), episode);
    episode += buf.episodes;
    IterationRecord rec;
    rec.iteration = it;
    rec.transitions = buf.size();
    rec.episodes = buf.episodes;
    if (!buf.empty()) {
      double r = 0.0;
      for (const auto& t : buf.transitions) r += t.reward;
      rec.mean_reward = r / static_cast<double>(buf.size());
      rec.ppo = ppo_update(net, adam, buf, s.trainer, derive_seed(it_seed, 2), s.forward);
    }
    if (!buf.metrics.empty()) {
      double m = 0.0;
      for (const auto& e : buf.metrics) m += e.steps;
      rec.mean_steps = m / static_cast<double>(buf.metrics.size());
    }
    out.push_back(rec);
    if (on_iteration && !on_iteration(rec)) break;
  }
  return out;
}

/// Greedy (argmax) evaluation of the network.
inline MetricsReport evaluate(const HtpNetwork& net, const std::vector<GridWorld>& worlds, const EpisodeConfig& cfg, int episodes,
                              std::uint64_t seed, const ForwardOptions& opt = {}, int workers = 1) {
  return evaluate_planner([&]() { return std::make_unique<HtpPlanner>(net, false, opt); }, worlds, cfg, episodes, seed, {},
                          workers);
}

}  // namespace topex
