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

#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "planner_fixtures.hpp"
#include "topex/htp_planner.hpp"

namespace topex {
namespace {

using testing::gradcheck;
using testing::permute_ghosts;
using testing::project;
using testing::random_planner_input;
using testing::random_tensor;

HtpConfig small(HtpVariant v = HtpVariant::Full, std::uint64_t seed = 3) {
  HtpConfig c;
  c.embed_dim = 6;
  c.hidden = 8;
  c.variant = v;
  c.init_seed = seed;
  return c;
}

TEST(ExtractGraphs, LabelsAndCounts) {
  Rng rng(1);
  const PlannerInput in = random_planner_input(rng, 3, 4, 6);
  const GraphSet g = extract_graphs(in);
  ASSERT_EQ(g.agents.size(), 3u);
  for (const auto& n : g.agents.nodes) EXPECT_EQ((std::pair{n.s1, n.s2}), (std::pair{1, 0}));
  for (const auto& n : g.hist_agents.nodes) EXPECT_EQ((std::pair{n.s1, n.s2}), (std::pair{1, 1}));
  for (const auto& n : g.mains.nodes) EXPECT_EQ((std::pair{n.s1, n.s2}), (std::pair{0, 0}));
  for (const auto& n : g.hist_ghosts.nodes) EXPECT_EQ((std::pair{n.s1, n.s2}), (std::pair{0, 1}));
  for (const auto& n : g.ghosts.nodes) {
    EXPECT_GE(n.x, 0.0);
    EXPECT_LE(n.x, 1.0);
  }
  EXPECT_EQ(g.ghosts.refs, in.ghost_ids);
}

TEST(ExtractGraphs, NoGhostsSignalsCompletion) {
  Rng rng(1);
  PlannerInput in = random_planner_input(rng, 2, 2, 2);
  in.ghosts.clear();
  EXPECT_THROW(extract_graphs(in), ExplorationComplete);
}

TEST(History, StepZeroThenOneSelection) {
  PlannerHistory h(20);
  const std::vector<Cell> agents{{3, 3}, {4, 4}};
  h.record_agents(agents);
  EXPECT_EQ(h.agents(), agents);
  EXPECT_TRUE(h.mains().empty());
  EXPECT_TRUE(h.ghosts().empty());
  h.record_selection({{10, 10}, {10, 10}}, {{20, 20}, {21, 21}});
  EXPECT_EQ(h.ghosts(), (std::vector<Cell>{{20, 20}, {21, 21}}));
  for (int i = 0; i < 30; ++i) h.record_agents(agents);
  EXPECT_EQ(h.agents().size(), 40u);
}

TEST(MemoryFusion, EmptyHistoryIsSelfAttention) {
  Rng rng(2);
  nn::ParameterSet ps;
  MemoryFusion mf(ps, "f", 5, rng);
  const nn::Tensor g = random_tensor(4, 5, rng);
  EXPECT_EQ(mf.forward(g, std::nullopt).values(), mf.self_att(g, g).values());
  EXPECT_EQ(mf.forward(g, nn::Tensor::zeros(0, 5)).values(), mf.self_att(g, g).values());
  const nn::Tensor out = mf.forward(g, random_tensor(7, 5, rng));
  EXPECT_EQ(out.shape(), g.shape());
}

TEST(IndividualEncoder, SingletonRowsAndResidual) {
  Rng rng(3);
  nn::ParameterSet ps;
  IndividualEncoder enc(ps, "ind", 5, 8, rng);
  EXPECT_EQ(enc.forward(random_tensor(1, 5, rng)).second.item(), 1.0);
  const nn::Tensor x = random_tensor(6, 5, rng);
  const auto [y, s] = enc.forward(x);
  for (int i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < s.cols(); ++j) sum += s(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  auto& last = enc.f_in.layers.back();
  std::fill(last.weight.values().begin(), last.weight.values().end(), 0.0);
  std::fill(last.bias.values().begin(), last.bias.values().end(), 0.0);
  EXPECT_EQ(enc.forward(x).first.values(), x.values());
}

TEST(RelationEncoder, SingletonAndSymmetry) {
  Rng rng(4);
  nn::ParameterSet ps;
  RelationEncoder rel(ps, "rel", 5, 8, rng);
  const nn::Tensor y = random_tensor(3, 5, rng);
  const auto s1 = rel.forward(y, random_tensor(1, 5, rng), nn::Tensor::from(3, 1, {0.1, 0.2, 0.3})).second;
  for (double v : s1.values()) EXPECT_EQ(v, 1.0);
  const nn::Tensor z = random_tensor(1, 5, rng);
  const nn::Tensor zz = nn::concat_cols(nn::transpose(z), nn::transpose(z));
  const auto s2 = rel.forward(y, nn::transpose(zz), nn::Tensor::from(3, 2, {0.4, 0.4, 0.1, 0.1, 0.7, 0.7})).second;
  for (double v : s2.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(RelationEncoder, GradientCheck) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    nn::ParameterSet ps;
    RelationEncoder rel(ps, "rel", 4, 6, rng);
    nn::Tensor y = random_tensor(2, 4, rng), z = random_tensor(3, 4, rng), d = random_tensor(2, 3, rng, 0.0, 2.0);
    std::vector<nn::Tensor> in{y, z, d};
    for (auto& [_, t] : ps.items()) in.push_back(t);
    EXPECT_LT(gradcheck(in, [&] {
      auto [out, s] = rel.forward(y, z, d);
      return nn::add(project(out, 1), project(s, 2));
    }), 1e-5);
  }
}

TEST(SelectGoals, HierarchicalProductAndRenormalization) {
  Rng rng(6);
  const PlannerInput in = random_planner_input(rng, 2, 3, 5);
  HtpNetwork net(small());
  const HtpForward f = net.forward(in);
  const int g = 5, m = 3;
  for (int k = 0; k < 2; ++k) {
    double total = 0.0;
    for (int j = 0; j < g; ++j) {
      const double expect = f.ghost_scores(k, j) * f.main_scores(k, in.ghost_parent[j]);
      EXPECT_DOUBLE_EQ(f.combined(k, j), expect);
      total += expect;
    }
    for (int j = 0; j < g; ++j) EXPECT_NEAR(f.probs(k, j), f.combined(k, j) / total, 1e-15);
  }
  (void)m;
}

TEST(SelectGoals, SingleGhostForcedAndArgmax) {
  Rng rng(7);
  const PlannerInput in = random_planner_input(rng, 3, 1, 1);
  HtpNetwork net(small());
  const PlannerOutput out = select_goals(net, in, nullptr);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(out.choice[k], 0);
    EXPECT_DOUBLE_EQ(out.distribution[k][0], 1.0);
  }
  EXPECT_EQ(argmax({0.1, 0.7, 0.2}), 1);
}

TEST(SelectGoals, SamplingIsSeededAndChoosesActiveGhosts) {
  Rng rng(8);
  const PlannerInput in = random_planner_input(rng, 2, 3, 7);
  HtpNetwork net(small());
  Rng a(11), b(11);
  const PlannerOutput x = select_goals(net, in, &a), y = select_goals(net, in, &b);
  EXPECT_EQ(x.choice, y.choice);
  for (int c : x.ghost_id) EXPECT_NE(std::find(in.ghost_ids.begin(), in.ghost_ids.end(), c), in.ghost_ids.end());
  for (const auto& row : x.distribution) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
}

TEST(SelectGoals, ScoreRowsAreProbabilityVectors) {
  Rng rng(9);
  HtpNetwork net(small(HtpVariant::Full, 9));
  for (int t = 0; t < 10; ++t) {
    const PlannerInput in = random_planner_input(rng, 1 + t % 3, 1 + t % 4, 2 + t);
    const HtpForward f = net.forward(in);
    for (const nn::Tensor* s : {&f.main_scores, &f.ghost_scores, &f.probs})
      for (int i = 0; i < s->rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < s->cols(); ++j) {
          EXPECT_GE((*s)(i, j), 0.0);
          sum += (*s)(i, j);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
  }
}

TEST(SelectGoals, ZeroedMainZeroesItsGhosts) {
  Rng rng(10);
  HtpNetwork net(small());
  const PlannerInput in = random_planner_input(rng, 2, 3, 8);
  std::vector<double> mask(2 * 3, 1.0);
  mask[0 * 3 + 1] = 0.0;
  mask[1 * 3 + 1] = 0.0;
  ForwardOptions opt;
  opt.main_score_mask = mask;
  const HtpForward f = net.forward(in, opt);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 8; ++j)
      if (in.ghost_parent[j] == 1) {
        EXPECT_EQ(f.probs(k, j), 0.0);
      } else {
        EXPECT_GT(f.probs(k, j), 0.0);
      }
}

TEST(SelectGoals, PermutationEquivariance) {
  Rng rng(11);
  HtpNetwork net(small());
  for (int t = 0; t < 10; ++t) {
    const PlannerInput in = random_planner_input(rng, 2, 3, 6);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    const HtpForward a = net.forward(in), b = net.forward(permute_ghosts(in, perm));
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 6; ++i) EXPECT_NEAR(b.probs(k, i), a.probs(k, perm[i]), 1e-9);
  }
}

TEST(HtpNetwork, EveryParameterReceivesGradient) {
  Rng rng(12);
  HtpNetwork net(HtpConfig{});
  const PlannerInput in = random_planner_input(rng, 2, 4, 9);
  net.params().zero_grad();
  const HtpForward f = net.forward(in);
  nn::add(project(nn::log(f.probs), 4), f.value).backward();
  for (const auto& [name, t] : net.params().items()) {
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(HtpNetwork, FullForwardGradientCheck) {
  Rng rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    HtpNetwork net(small(HtpVariant::Full, 20 + trial));
    const PlannerInput in = random_planner_input(rng, 2, 2, 3, 1);
    std::vector<nn::Tensor> params;
    for (auto& [_, t] : net.params().items()) params.push_back(t);
    EXPECT_LT(gradcheck(params, [&] {
      const HtpForward f = net.forward(in);
      return nn::add(project(f.probs, 5), f.value);
    }), 1e-5);
  }
}

TEST(HtpNetwork, DeterministicConstructionAndForward) {
  Rng rng(14);
  const PlannerInput in = random_planner_input(rng, 2, 3, 4);
  HtpNetwork a(small()), b(small());
  EXPECT_EQ(nn::save_checkpoint(a.params()), nn::save_checkpoint(b.params()));
  EXPECT_EQ(a.forward(in).probs.values(), b.forward(in).probs.values());
}

TEST(Ablations, SingleUsesGhostScoresDirectly) {
  Rng rng(15);
  const PlannerInput in = random_planner_input(rng, 2, 3, 5);
  HtpNetwork net(small(HtpVariant::Single));
  const HtpForward f = net.forward(in);
  EXPECT_FALSE(f.main_scores.defined());
  EXPECT_EQ(f.probs.values(), f.ghost_scores.values());
  EXPECT_EQ(net.params().find("main_selector.rel.wq"), nullptr);
}

TEST(Ablations, ConcatGrowsGhostFeaturesAndBypassesProduct) {
  Rng rng(16);
  const PlannerInput in = random_planner_input(rng, 2, 3, 5);
  HtpNetwork concat(small(HtpVariant::Concat)), full(small(HtpVariant::Full));
  const HtpForward c = concat.forward(in), f = full.forward(in);
  EXPECT_EQ(c.ghost_feature_dim, 12);
  EXPECT_EQ(f.ghost_feature_dim, 6);
  EXPECT_FALSE(c.combined.defined());
  EXPECT_EQ(c.probs.values(), c.ghost_scores.values());
}

TEST(Ablations, NoHistorySkipsFusion) {
  Rng rng(17);
  const PlannerInput in = random_planner_input(rng, 2, 3, 5);
  HtpNetwork net(small(HtpVariant::NoHistory));
  EXPECT_EQ(net.params().find("fusion.agent.self.wq"), nullptr);
  const HtpForward f = net.forward(in);
  EXPECT_EQ(f.fused_ghosts.values(), net.encode(extract_graphs(in).ghosts).values());
  PlannerInput other = in;
  other.hist_ghosts.clear();
  other.hist_agents.clear();
  EXPECT_EQ(net.forward(other).probs.values(), f.probs.values());
}

TEST(Ablations, FlagsAndNames) {
  EXPECT_EQ(variant_from_flags(false, false, false), HtpVariant::Full);
  EXPECT_EQ(variant_from_flags(false, true, false), HtpVariant::Single);
  EXPECT_THROW(variant_from_flags(true, true, false), ConfigError);
  for (auto v : {HtpVariant::Full, HtpVariant::NoHistory, HtpVariant::Single, HtpVariant::Concat})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
}

TEST(BuildPlannerInput, DistancesFromPlanningGrids) {
  OccupancyGrid grid(20, 20, 0.25);
  TopoGraph g;
  g.mains.push_back({0, {5, 5}, {1.0}, 0, 0, true});
  g.ghosts.push_back({1, 0, {15, 5}, true, 0, {}});
  g.ghosts.push_back({2, 0, {5, 15}, false, 0, {}});
  PlannerHistory h;
  h.record_agents({{5, 6}});
  const PlannerInput in = build_planner_input(g, {{5, 6}}, {grid}, h);
  ASSERT_EQ(in.ghosts.size(), 1u);
  EXPECT_EQ(in.ghost_ids[0], 1);
  EXPECT_EQ(in.ghost_parent[0], 0);
  EXPECT_DOUBLE_EQ(in.d_main[0], 0.25);
  EXPECT_EQ(in.d_ghost[0], geodesic_distance(grid, {5, 6}, {15, 5}));
  EXPECT_EQ(in.hist_agents.size(), 1u);
}

}  // namespace
}  // namespace topex
