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
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "topex/common.hpp"
#include "topex/distance_field.hpp"
#include "topex/nn.hpp"
#include "topex/occupancy_grid.hpp"
#include "topex/topo_mapper.hpp"

namespace topex {

enum class HtpVariant { Full, NoHistory, Single, Concat };

inline const char* variant_name(HtpVariant v) {
  switch (v) {
    case HtpVariant::Full: return "full";
    case HtpVariant::NoHistory: return "no_history";
    case HtpVariant::Single: return "single";
    case HtpVariant::Concat: return "concat";
  }
  return "?";
}

inline HtpVariant parse_variant(const std::string& s) {
  for (auto v : {HtpVariant::Full, HtpVariant::NoHistory, HtpVariant::Single, HtpVariant::Concat})
    if (s == variant_name(v)) return v;
  throw ConfigError("unknown planner variant '" + s + "'");
}

/// Maps ablation flags to a variant; at most one may be set.
inline HtpVariant variant_from_flags(bool no_history, bool single, bool concat) {
  const int n = int(no_history) + int(single) + int(concat);
  if (n > 1) throw ConfigError("at most one planner ablation flag may be set");
  if (no_history) return HtpVariant::NoHistory;
  if (single) return HtpVariant::Single;
  if (concat) return HtpVariant::Concat;
  return HtpVariant::Full;
}

struct HtpConfig {
  int embed_dim = 32;
  int hidden = 64;
  int history = 20;  // global steps kept in each historical graph
  HtpVariant variant = HtpVariant::Full;
  std::uint64_t init_seed = 1;
};

// ---------------------------------------------------------------------------
// Feature graphs

enum class GraphKind { Agent, Main, Ghost };

/// (x, y) normalised by the map size; (s1, s2) = (is agent, is historical).
struct NodeFeature {
  double x = 0.0;
  double y = 0.0;
  int s1 = 0;
  int s2 = 0;
  friend bool operator==(const NodeFeature&, const NodeFeature&) = default;
};

struct FeatureGraph {
  GraphKind kind = GraphKind::Agent;
  std::vector<NodeFeature> nodes;
  std::vector<int> refs;  // backing node ids (agent index for agent graphs)

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }

  nn::Tensor tensor() const {
    std::vector<double> v;
    v.reserve(nodes.size() * 4);
    for (const auto& n : nodes) {
      v.push_back(n.x);
      v.push_back(n.y);
      v.push_back(n.s1);
      v.push_back(n.s2);
    }
    return nn::Tensor::from(static_cast<int>(nodes.size()), 4, std::move(v));
  }
};

/// FIFO record of agent positions and selected nodes, one entry per global step.
class PlannerHistory {
 public:
  explicit PlannerHistory(int capacity = 20) : capacity_(std::max(1, capacity)) {}

  void record_agents(std::vector<Cell> cells) { push(agents_, std::move(cells)); }
  void record_selection(std::vector<Cell> mains, std::vector<Cell> ghosts) {
    push(mains_, std::move(mains));
    push(ghosts_, std::move(ghosts));
  }

  std::vector<Cell> agents() const { return flatten(agents_); }
  std::vector<Cell> mains() const { return flatten(mains_); }
  std::vector<Cell> ghosts() const { return flatten(ghosts_); }
  int capacity() const { return capacity_; }
  void clear() {
    agents_.clear();
    mains_.clear();
    ghosts_.clear();
  }
  friend bool operator==(const PlannerHistory&, const PlannerHistory&) = default;

 private:
  void push(std::deque<std::vector<Cell>>& q, std::vector<Cell> v) {
    q.push_back(std::move(v));
    while (static_cast<int>(q.size()) > capacity_) q.pop_front();
  }
  static std::vector<Cell> flatten(const std::deque<std::vector<Cell>>& q) {
    std::vector<Cell> out;
    for (const auto& v : q) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  int capacity_;
  std::deque<std::vector<Cell>> agents_, mains_, ghosts_;
};

/// Everything the network sees at one global step.
struct PlannerInput {
  int width = 0;
  int height = 0;
  double cell_size = 0.25;
  std::vector<Cell> agents;
  std::vector<Cell> mains;
  std::vector<int> main_ids;
  std::vector<Cell> ghosts;        // active ghosts only
  std::vector<int> ghost_ids;
  std::vector<int> ghost_parent;   // index into mains
  std::vector<double> d_main;      // agents x mains, meters (kInf when unreachable)
  std::vector<double> d_ghost;     // agents x ghosts, meters
  std::vector<Cell> hist_agents;
  std::vector<Cell> hist_mains;
  std::vector<Cell> hist_ghosts;

  std::size_t n_agents() const { return agents.size(); }
  double diagonal() const { return std::hypot(width * cell_size, height * cell_size); }
  friend bool operator==(const PlannerInput&, const PlannerInput&) = default;
};

struct GraphSet {
  FeatureGraph agents, mains, ghosts;
  FeatureGraph hist_agents, hist_mains, hist_ghosts;
};

inline NodeFeature node_feature(Cell c, int width, int height, int s1, int s2) {
  return {(c.x + 0.5) / width, (c.y + 0.5) / height, s1, s2};
}

/// The three current graphs and their historical counterparts.
inline GraphSet extract_graphs(const PlannerInput& in) {
  if (in.ghosts.empty()) throw ExplorationComplete("no active ghost nodes");
  GraphSet g;
  auto fill = [&](FeatureGraph& fg, GraphKind kind, const std::vector<Cell>& cells, const std::vector<int>* refs, int s1, int s2) {
    fg.kind = kind;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      fg.nodes.push_back(node_feature(cells[i], in.width, in.height, s1, s2));
      fg.refs.push_back(refs ? (*refs)[i] : static_cast<int>(i));
    }
  };
  fill(g.agents, GraphKind::Agent, in.agents, nullptr, 1, 0);
  fill(g.mains, GraphKind::Main, in.mains, &in.main_ids, 0, 0);
  fill(g.ghosts, GraphKind::Ghost, in.ghosts, &in.ghost_ids, 0, 0);
  fill(g.hist_agents, GraphKind::Agent, in.hist_agents, nullptr, 1, 1);
  fill(g.hist_mains, GraphKind::Main, in.hist_mains, nullptr, 0, 1);
  fill(g.hist_ghosts, GraphKind::Ghost, in.hist_ghosts, nullptr, 0, 1);
  return g;
}

/// Builds the planner input from the merged graph. Distances come from each
/// agent's own planning grid (unknown treated as free).
inline PlannerInput build_planner_input(const TopoGraph& merged, const std::vector<Cell>& agents,
                                        const std::vector<OccupancyGrid>& planning, const PlannerHistory& history) {
  if (planning.size() != agents.size()) throw ConfigError("build_planner_input: one planning grid per agent");
  PlannerInput in;
  in.width = planning.front().width();
  in.height = planning.front().height();
  in.cell_size = planning.front().cell_size();
  in.agents = agents;
  for (const auto& m : merged.mains) {
    in.mains.push_back(m.cell);
    in.main_ids.push_back(m.id);
  }
  for (const auto& g : merged.ghosts) {
    if (!g.active) continue;
    const int parent = merged.main_index(g.parent);
    if (parent < 0) continue;
    in.ghosts.push_back(g.cell);
    in.ghost_ids.push_back(g.id);
    in.ghost_parent.push_back(parent);
  }
  const std::size_t n = agents.size();
  in.d_main.assign(n * in.mains.size(), kInf);
  in.d_ghost.assign(n * in.ghosts.size(), kInf);
  for (std::size_t k = 0; k < n; ++k) {
    if (!planning[k].is_free(agents[k])) continue;
    const DistanceField f = compute_distance_field(planning[k], agents[k]);
    for (std::size_t j = 0; j < in.mains.size(); ++j) in.d_main[k * in.mains.size() + j] = f.at(in.mains[j]);
    for (std::size_t j = 0; j < in.ghosts.size(); ++j) in.d_ghost[k * in.ghosts.size() + j] = f.at(in.ghosts[j]);
  }
  in.hist_agents = history.agents();
  in.hist_mains = history.mains();
  in.hist_ghosts = history.ghosts();
  return in;
}

/// Distances scaled by the map diagonal; unreachable pairs map to 2.
inline nn::Tensor scaled_distances(const std::vector<double>& d, int rows, int cols, double diagonal) {
  std::vector<double> v(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) v[i] = std::isfinite(d[i]) ? d[i] / diagonal : 2.0;
  return nn::Tensor::from(rows, cols, std::move(v));
}

// ---------------------------------------------------------------------------
// Network blocks

/// S = softmax((X Wq)(X Wk)^T / sqrt(d)); X' = X + f_in([X, S (X Wv)]).
struct IndividualEncoder {
  nn::Tensor wq, wk, wv;
  nn::Mlp f_in;

  IndividualEncoder() = default;
  IndividualEncoder(nn::ParameterSet& ps, const std::string& name, int dim, int hidden, Rng& rng)
      : wq(ps.add(name + ".wq", nn::init_uniform(dim, dim, dim, rng))),
        wk(ps.add(name + ".wk", nn::init_uniform(dim, dim, dim, rng))),
        wv(ps.add(name + ".wv", nn::init_uniform(dim, dim, dim, rng))),
        f_in(ps, name + ".f_in", {2 * dim, hidden, dim}, rng) {}

  std::pair<nn::Tensor, nn::Tensor> forward(const nn::Tensor& x) const {
    using namespace nn;
    const double inv = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
    const Tensor s = softmax_rows(scale(matmul(matmul(x, wq), transpose(matmul(x, wk))), inv));
    const Tensor msg = matmul(s, matmul(x, wv));
    return {add(x, f_in(concat_cols(x, msg))), s};
  }
};

/// S = softmax_z(f_dis([Y Wq, Z Wk, d])); Y' = Y + f_re([Y, S (Z Wv)]).
/// f_dis's first layer is split into per-part blocks so the (y, z) pairs are
/// formed after projection. Its output layer has no bias: softmax ignores it.
struct RelationEncoder {
  nn::Tensor wq, wk, wv;
  nn::Tensor dis_y, dis_z, dis_d, dis_b, dis_w;
  nn::Mlp f_re;

  RelationEncoder() = default;
  RelationEncoder(nn::ParameterSet& ps, const std::string& name, int dim, int hidden, Rng& rng)
      : wq(ps.add(name + ".wq", nn::init_uniform(dim, dim, dim, rng))),
        wk(ps.add(name + ".wk", nn::init_uniform(dim, dim, dim, rng))),
        wv(ps.add(name + ".wv", nn::init_uniform(dim, dim, dim, rng))),
        dis_y(ps.add(name + ".f_dis.0.wy", nn::init_uniform(dim, hidden, 2 * dim + 1, rng))),
        dis_z(ps.add(name + ".f_dis.0.wz", nn::init_uniform(dim, hidden, 2 * dim + 1, rng))),
        dis_d(ps.add(name + ".f_dis.0.wd", nn::init_uniform(1, hidden, 2 * dim + 1, rng))),
        dis_b(ps.add(name + ".f_dis.0.b", nn::init_uniform(1, hidden, 2 * dim + 1, rng))),
        dis_w(ps.add(name + ".f_dis.1.w", nn::init_uniform(hidden, 1, hidden, rng))),
        f_re(ps, name + ".f_re", {2 * dim, hidden, dim}, rng) {}

  /// `dist` is |Y| x |Z| (scaled). Returns (updated Y, scores).
  std::pair<nn::Tensor, nn::Tensor> forward(const nn::Tensor& y, const nn::Tensor& z, const nn::Tensor& dist) const {
    using namespace nn;
    const int n = y.rows(), m = z.rows();
    if (dist.rows() != n || dist.cols() != m) throw ShapeError("RelationEncoder: distance matrix shape");
    const Tensor hy = add_row(matmul(matmul(y, wq), dis_y), dis_b);
    const Tensor hz = matmul(matmul(z, wk), dis_z);
    const Tensor hd = matmul(reshape(dist, n * m, 1), dis_d);
    const Tensor h = relu(add(pairwise_sum(hy, hz), hd));
    const Tensor logits = reshape(matmul(h, dis_w), n, m);
    const Tensor s = softmax_rows(logits);
    const Tensor msg = matmul(s, matmul(z, wv));
    return {add(y, f_re(concat_cols(y, msg))), s};
  }
};

/// Self-attention over G, then cross-attention from G to its history.
struct MemoryFusion {
  nn::Attention self_att, cross_att;

  MemoryFusion() = default;
  MemoryFusion(nn::ParameterSet& ps, const std::string& name, int dim, Rng& rng)
      : self_att(ps, name + ".self", dim, rng), cross_att(ps, name + ".cross", dim, rng) {}

  nn::Tensor forward(const nn::Tensor& g, const std::optional<nn::Tensor>& hist) const {
    const nn::Tensor s = self_att(g, g);
    if (!hist || hist->rows() == 0) return s;
    return cross_att(s, *hist);
  }
};

struct ForwardOptions {
  // Multiplies S_{m,re} element-wise (agents x mains) before it enters the
  // ghost-score product; used to probe the hierarchy.
  std::optional<std::vector<double>> main_score_mask;
};

struct HtpForward {
  nn::Tensor probs;         // agents x ghosts, final distribution
  nn::Tensor ghost_scores;  // S_{g,re}
  nn::Tensor main_scores;   // S_{m,re} (undefined for the single-selector variant)
  nn::Tensor combined;      // hierarchical product before renormalisation (undefined when bypassed)
  nn::Tensor value;         // 1 x 1
  nn::Tensor agent_in_scores;  // main selector S_{m,in} over agents
  nn::Tensor fused_agents, fused_mains, fused_ghosts;
  int ghost_feature_dim = 0;
};

/// Hierarchical selector network with shared parameters for all agents.
class HtpNetwork {
 public:
  explicit HtpNetwork(HtpConfig cfg = {}) : cfg_(cfg) {
    Rng rng(cfg.init_seed);
    const int d = cfg.embed_dim, h = cfg.hidden;
    encoder_ = nn::Mlp(params_, "encoder", {4, h, d}, rng);
    if (uses_history()) {
      fuse_agents_ = MemoryFusion(params_, "fusion.agent", d, rng);
      fuse_mains_ = MemoryFusion(params_, "fusion.main", d, rng);
      fuse_ghosts_ = MemoryFusion(params_, "fusion.ghost", d, rng);
    }
    if (cfg.variant != HtpVariant::Single) {
      ms_agents_ = IndividualEncoder(params_, "main_selector.ind_agent", d, h, rng);
      ms_mains_ = IndividualEncoder(params_, "main_selector.ind_main", d, h, rng);
      ms_rel_ = RelationEncoder(params_, "main_selector.rel", d, h, rng);
    }
    if (cfg.variant == HtpVariant::Concat) concat_proj_ = nn::Linear(params_, "ghost_selector.concat", 2 * d, d, rng);
    gs_agents_ = IndividualEncoder(params_, "ghost_selector.ind_agent", d, h, rng);
    gs_ghosts_ = IndividualEncoder(params_, "ghost_selector.ind_ghost", d, h, rng);
    gs_rel_ = RelationEncoder(params_, "ghost_selector.rel", d, h, rng);
    value_head_ = nn::Mlp(params_, "value", {3 * d, h, 1}, rng);
  }

  HtpNetwork(const HtpNetwork&) = delete;
  HtpNetwork& operator=(const HtpNetwork&) = delete;

  const HtpConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  bool uses_history() const { return cfg_.variant != HtpVariant::NoHistory; }
  bool uses_hierarchy() const { return cfg_.variant == HtpVariant::Full || cfg_.variant == HtpVariant::NoHistory; }

  nn::Tensor encode(const FeatureGraph& g) const { return encoder_(g.tensor()); }

  HtpForward forward(const PlannerInput& in, const ForwardOptions& opt = {}) const {
    using namespace nn;
    const GraphSet gs = extract_graphs(in);
    const int n = static_cast<int>(in.agents.size());
    const int m = static_cast<int>(in.mains.size());
    const int g = static_cast<int>(in.ghosts.size());
    if (n == 0) throw ConfigError("planner: no agents");
    if (static_cast<int>(in.ghost_parent.size()) != g) throw ShapeError("planner: ghost_parent size");
    if (static_cast<int>(in.d_main.size()) != n * m || static_cast<int>(in.d_ghost.size()) != n * g)
      throw ShapeError("planner: distance matrix size");

    auto maybe = [&](const FeatureGraph& fg) -> std::optional<Tensor> {
      if (fg.empty()) return std::nullopt;
      return encode(fg);
    };
    Tensor xa = encode(gs.agents), xm = encode(gs.mains), xg = encode(gs.ghosts);
    if (uses_history()) {
      xa = fuse_agents_.forward(xa, maybe(gs.hist_agents));
      xm = fuse_mains_.forward(xm, maybe(gs.hist_mains));
      xg = fuse_ghosts_.forward(xg, maybe(gs.hist_ghosts));
    }

    HtpForward out;
    out.fused_agents = xa;
    out.fused_mains = xm;
    out.fused_ghosts = xg;
    const double diag = in.diagonal();
    Tensor agents = xa;
    if (cfg_.variant != HtpVariant::Single) {
      auto [a1, s_in] = ms_agents_.forward(xa);
      out.agent_in_scores = s_in;
      const Tensor m1 = ms_mains_.forward(xm).first;
      auto [a2, s_m] = ms_rel_.forward(a1, m1, scaled_distances(in.d_main, n, m, diag));
      agents = a2;
      out.main_scores = s_m;
    }
    Tensor ghosts = xg;
    if (cfg_.variant == HtpVariant::Concat) {
      ghosts = concat_cols(xg, gather_rows(xm, in.ghost_parent));
      out.ghost_feature_dim = ghosts.cols();
      ghosts = concat_proj_(ghosts);
    } else {
      out.ghost_feature_dim = ghosts.cols();
    }
    const Tensor g1 = gs_ghosts_.forward(ghosts).first;
    const Tensor a3 = gs_agents_.forward(agents).first;
    auto [a4, s_g] = gs_rel_.forward(a3, g1, scaled_distances(in.d_ghost, n, g, diag));
    out.ghost_scores = s_g;

    if (uses_hierarchy()) {
      Tensor s_m = out.main_scores;
      if (opt.main_score_mask) {
        if (opt.main_score_mask->size() != static_cast<std::size_t>(n * m)) throw ShapeError("planner: mask shape");
        s_m = mul(s_m, Tensor::from(n, m, *opt.main_score_mask));
      }
      out.combined = mul(s_g, gather_cols(s_m, in.ghost_parent));
      out.probs = normalize_rows(out.combined);
    } else {
      out.probs = s_g;
    }
    out.value = value_head_(concat_cols(concat_cols(mean_rows(a4), mean_rows(xm)), mean_rows(xg)));
    return out;
  }

 private:
  HtpConfig cfg_;
  nn::ParameterSet params_;
  nn::Mlp encoder_;
  MemoryFusion fuse_agents_, fuse_mains_, fuse_ghosts_;
  IndividualEncoder ms_agents_, ms_mains_, gs_agents_, gs_ghosts_;
  RelationEncoder ms_rel_, gs_rel_;
  nn::Linear concat_proj_;
  nn::Mlp value_head_;
};

// ---------------------------------------------------------------------------
// Goal selection

struct PlannerOutput {
  std::vector<int> choice;    // index into PlannerInput::ghosts
  std::vector<int> ghost_id;  // merged-graph id of the chosen ghost
  std::vector<std::vector<double>> distribution;
  std::vector<double> log_prob;
  double value = 0.0;
};

inline int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

/// Inverse-CDF draw; the last positive entry absorbs rounding.
inline int sample_categorical(const std::vector<double>& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

/// Per-agent goal choice. With `rng` the choice is sampled (training);
/// without it the argmax is taken (evaluation).
inline PlannerOutput select_goals(const HtpNetwork& net, const PlannerInput& in, Rng* rng,
                                  const ForwardOptions& opt = {}) {
  const HtpForward f = net.forward(in, opt);
  const int n = f.probs.rows(), g = f.probs.cols();
  PlannerOutput out;
  out.value = f.value.item();
  for (int k = 0; k < n; ++k) {
    std::vector<double> row(f.probs.values().begin() + k * g, f.probs.values().begin() + (k + 1) * g);
    double total = 0.0;
    for (double p : row) total += p;
    if (!(total > 0.0)) row.assign(f.ghost_scores.values().begin() + k * g, f.ghost_scores.values().begin() + (k + 1) * g);
    const int c = rng ? sample_categorical(row, *rng) : argmax(row);
    out.choice.push_back(c);
    out.ghost_id.push_back(in.ghost_ids.empty() ? c : in.ghost_ids[c]);
    out.log_prob.push_back(std::log(std::max(row[c], 1e-300)));
    out.distribution.push_back(std::move(row));
  }
  return out;
}

}  // namespace topex
