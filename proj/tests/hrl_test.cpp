#include "btadapt/hrl.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace {

using namespace btadapt;
using testutil::force_constant_policy;
using Eigen::VectorXd;

TEST(ComputeP, MaxOverSlotWidths) {
  EXPECT_EQ(hrl::compute_p({2, 2, 2, 0}), 2);
  EXPECT_EQ(hrl::compute_p({0, 2, 2, 1}), 2);
  EXPECT_EQ(hrl::compute_p({3}), 3);
  EXPECT_THROW(hrl::compute_p({}), std::invalid_argument);
}

TEST(ComputeP, NarrowerThanStackedWidthOnChains) {
  for (int n = 2; n <= 6; ++n) {
    auto tree = bt::BehaviorTree::chain(n, {0.95, 0.05});
    int p = hrl::compute_p(tree.slot_dims());
    EXPECT_EQ(p, 2);
    EXPECT_LT(p, tree.stacked_dim());
  }
}

TEST(ObsCodec, ScalarEncodingNormalizesIntoUnitBox) {
  env::EnvConfig cfg;
  hrl::ObsCodec codec{cfg, hrl::IndexEncoding::Scalar, 4};
  ASSERT_EQ(codec.obs_dim(), 6);

  // Midpoint of every range maps to zero.
  env::Context mid{0.25, 0.175, 0.40};
  VectorXd o = codec.encode(mid, 1, {0.5, 0.4});
  EXPECT_NEAR(o(0), 0.0, 1e-12);
  EXPECT_NEAR(o(1), 0.0, 1e-12);
  EXPECT_NEAR(o(2), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(o(3), -1.0);  // first node
  EXPECT_NEAR(o(4), 0.0, 1e-12);
  EXPECT_NEAR(o(5), 0.0, 1e-12);

  VectorXd lo = codec.encode({cfg.h_o_min, cfg.w_o_min, cfg.x_o_min}, 4,
                             {cfg.x_min, cfg.z_min});
  VectorXd hi = codec.encode({cfg.h_o_max, cfg.w_o_max, cfg.x_o_max}, 4,
                             {cfg.x_max, cfg.z_max});
  for (int k : {0, 1, 2, 4, 5}) {
    EXPECT_DOUBLE_EQ(lo(k), -1.0) << k;
    EXPECT_DOUBLE_EQ(hi(k), 1.0) << k;
  }
  EXPECT_DOUBLE_EQ(lo(3), 1.0);  // last node
  EXPECT_NEAR(codec.encode(mid, 2, {0.5, 0.4})(3), -1.0 / 3.0, 1e-12);

  // Terminal observations carry the out-of-range sentinel.
  EXPECT_DOUBLE_EQ(codec.encode(mid, std::nullopt, {0.5, 0.4})(3),
                   hrl::ObsCodec::kNoneSentinel);

  hrl::ObsCodec single{cfg, hrl::IndexEncoding::Scalar, 1};
  EXPECT_DOUBLE_EQ(single.encode(mid, 1, {0.5, 0.4})(3), 0.0);
}

TEST(ObsCodec, OneHotEncoding) {
  env::EnvConfig cfg;
  hrl::ObsCodec codec{cfg, hrl::IndexEncoding::OneHot, 4};
  ASSERT_EQ(codec.obs_dim(), 9);
  env::Context mid{0.25, 0.175, 0.40};

  VectorXd o = codec.encode(mid, 2, {0.5, 0.4});
  EXPECT_DOUBLE_EQ(o(3), 0.0);
  EXPECT_DOUBLE_EQ(o(4), 1.0);
  EXPECT_DOUBLE_EQ(o(5), 0.0);
  EXPECT_DOUBLE_EQ(o(6), 0.0);

  VectorXd none = codec.encode(mid, std::nullopt, {0.5, 0.4});
  for (int k = 3; k < 7; ++k) EXPECT_DOUBLE_EQ(none(k), 0.0);

  EXPECT_THROW(codec.encode(mid, 5, {0.5, 0.4}), std::invalid_argument);
}

struct Fixture {
  env::EnvConfig cfg;
  env::Env environment;
  bt::BehaviorTree tree;
  hrl::ObsCodec codec;
  sac::SacConfig scfg;
  Rng rng;
  sac::SacAgent agent;
  sac::ReplayBuffer buffer;

  explicit Fixture(int n_motions, int batch = 256, int warmup = 0,
                   std::uint64_t seed = 7)
      : environment(cfg),
        tree(bt::BehaviorTree::chain(n_motions, {cfg.goal.x, cfg.goal.z})),
        codec{cfg, hrl::IndexEncoding::Scalar, tree.n_actions()},
        scfg{},
        rng(seed),
        agent((scfg.obs_dim = codec.obs_dim(), scfg.act_dim = 2,
               scfg.hidden = {16, 16}, scfg.batch = batch,
               scfg.warmup_steps = warmup,
               scfg.action_scale = VectorXd::Constant(2, cfg.action_bound), scfg),
              rng),
        buffer(scfg.obs_dim, scfg.act_dim, 10000) {}
};

TEST(Episode, CleanRunPushesOneTransitionPerActionNode) {
  Fixture f(3);
  // Diagonal hops clear a short obstacle; the final goal move spans 0.68,
  // which only works because goal motions bypass the parameter bound.
  force_constant_policy(f.agent, {0.12, 0.14});
  env::Context c{0.10, 0.05, 0.25};
  hrl::TrainState state;
  auto rec = hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                              hrl::EpisodeMode::TrainStochastic, f.rng, &state);

  EXPECT_TRUE(rec.success);
  EXPECT_FALSE(rec.collision);
  EXPECT_EQ(rec.transitions_pushed, 4);
  ASSERT_EQ(f.buffer.size(), 4u);
  ASSERT_EQ(rec.an_log.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(rec.an_log[k].index, k + 1);

  double reward_sum = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& t = f.buffer[k];
    EXPECT_EQ(t.done, k == 3);
    EXPECT_EQ(t.next_index_none, k == 3);
    reward_sum += t.r;
    if (k > 0) {
      // Chained upper-level MDP: next observation of step k is the
      // observation of step k+1.
      EXPECT_TRUE(f.buffer[k - 1].s_next.isApprox(t.s, 0.0)) << k;
    }
  }
  EXPECT_DOUBLE_EQ(reward_sum, rec.total_reward);
  EXPECT_EQ(state.env_steps, 4);
}

TEST(Episode, CollisionMidEpisodeStoresDoneWithSentinel) {
  Fixture f(3);
  force_constant_policy(f.agent, {0.12, 0.0});  // crawl along the floor
  env::Context c{0.30, 0.10, 0.25};             // wall across the second hop
  hrl::TrainState state;
  auto rec = hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                              hrl::EpisodeMode::TrainStochastic, f.rng, &state);

  EXPECT_TRUE(rec.collision);
  EXPECT_FALSE(rec.success);
  EXPECT_FALSE(rec.structural_failure);
  EXPECT_EQ(rec.transitions_pushed, 2);
  ASSERT_EQ(f.buffer.size(), 2u);
  EXPECT_FALSE(f.buffer[0].done);
  EXPECT_TRUE(f.buffer[1].done);
  EXPECT_TRUE(f.buffer[1].next_index_none);
  EXPECT_LT(f.buffer[1].r, -90.0);  // carries the violation penalty
  // The reactive guard tripped and reset the tree: nothing left in flight.
  EXPECT_EQ(f.tree.running_actions(), 0);
  EXPECT_DOUBLE_EQ(f.buffer[1].s_next(3), hrl::ObsCodec::kNoneSentinel);
}

TEST(Episode, EvalModeLeavesBufferAndLearnerUntouched) {
  Fixture f(3);
  force_constant_policy(f.agent, {0.12, 0.14});
  env::Context c{0.10, 0.05, 0.25};
  auto rec = hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                              hrl::EpisodeMode::EvalDeterministic, f.rng);
  EXPECT_TRUE(rec.success);
  EXPECT_EQ(rec.transitions_pushed, 0);
  EXPECT_EQ(f.buffer.size(), 0u);
  EXPECT_EQ(f.agent.n_updates(), 0);
}

TEST(Episode, UpdatesStartOnceBufferCoversBatch) {
  Fixture f(3, /*batch=*/4, /*warmup=*/0);
  force_constant_policy(f.agent, {0.12, 0.14});
  env::Context c{0.10, 0.05, 0.25};
  hrl::TrainState state;
  long long pushed = 0;
  for (int e = 0; e < 3; ++e) {
    auto rec = hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                                hrl::EpisodeMode::TrainStochastic, f.rng, &state);
    pushed += rec.transitions_pushed;
  }
  // One update per pushed transition from the moment the buffer can serve a
  // batch (here: from transition 4 onward).
  EXPECT_EQ(f.agent.n_updates(), pushed - 3);
  EXPECT_EQ(state.env_steps, pushed);
}

TEST(Episode, WarmupPhaseSkipsUpdatesAndUsesRandomActions) {
  Fixture f(3, /*batch=*/4, /*warmup=*/1000);
  env::Context c{0.10, 0.05, 0.25};
  hrl::TrainState state;
  for (int e = 0; e < 3; ++e) {
    hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                     hrl::EpisodeMode::TrainStochastic, f.rng, &state);
  }
  EXPECT_EQ(f.agent.n_updates(), 0);
  EXPECT_GE(f.buffer.size(), 3u);
  for (std::size_t k = 0; k < f.buffer.size(); ++k) {
    EXPECT_LE(f.buffer[k].a.cwiseAbs().maxCoeff(), f.cfg.action_bound + 1e-12);
  }
}

// Every stage of an episode in protocol order: select node, query parameters,
// execute, then store — with the next node already chosen when storing.
struct TraceObserver : hrl::EpisodeObserver {
  std::vector<std::string> events;
  void on_context(const env::Context&) override { events.push_back("context"); }
  void on_tick(bt::NodeStatus s, std::optional<int> a) override {
    events.push_back("tick:" + std::string(bt::to_string(s)) +
                     (a ? ":" + std::to_string(*a) : ""));
  }
  void on_params(int i, const VectorXd&) override {
    events.push_back("params:" + std::to_string(i));
  }
  void on_motion(int i, const env::MotionOutcome&) override {
    events.push_back("motion:" + std::to_string(i));
  }
  void on_transition(const sac::Transition& t) override {
    events.push_back(std::string("push:") + (t.done ? "done" : "live"));
  }
  void on_update() override { events.push_back("update"); }
};

TEST(Episode, ObserverSeesProtocolOrder) {
  Fixture f(2, /*batch=*/1000, /*warmup=*/0);  // batch > data: no updates
  force_constant_policy(f.agent, {0.15, 0.18});
  env::Context c{0.10, 0.05, 0.25};
  hrl::TrainState state;
  TraceObserver trace;
  auto rec = hrl::run_episode(f.environment, f.tree, f.agent, f.buffer, f.codec, c,
                              hrl::EpisodeMode::TrainStochastic, f.rng, &state, &trace);
  ASSERT_TRUE(rec.success);
  std::vector<std::string> want = {
      "context",       "tick:running:1", "params:1", "motion:1",
      "tick:running:2", "push:live",     "params:2", "motion:2",
      "tick:running:3", "push:live",     "params:3", "motion:3",
      "push:done"};
  EXPECT_EQ(trace.events, want);
}

TEST(Train, CurveShapeAndDeterminism) {
  hrl::TrainConfig cfg;
  cfg.n_motions = 2;
  cfg.episodes = 24;
  cfg.eval_period = 8;
  cfg.n_train_contexts = 3;
  cfg.context_seed = 11;
  cfg.seed = 5;
  cfg.sac_cfg.hidden = {16, 16};
  cfg.sac_cfg.batch = 16;
  cfg.sac_cfg.warmup_steps = 20;

  auto a = hrl::train_run(cfg);
  auto b = hrl::train_run(cfg);

  ASSERT_EQ(a.curve.size(), 4u);  // episodes 0, 8, 16, 24
  EXPECT_EQ(a.curve[0].episode, 0);
  EXPECT_EQ(a.curve[3].episode, 24);
  EXPECT_FALSE(a.diverged);
  EXPECT_GT(a.env_steps, 0);

  ASSERT_EQ(b.curve.size(), a.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    EXPECT_EQ(a.curve[k].episode, b.curve[k].episode);
    EXPECT_DOUBLE_EQ(a.curve[k].mean_reward, b.curve[k].mean_reward);
    EXPECT_DOUBLE_EQ(a.curve[k].std_reward, b.curve[k].std_reward);
    EXPECT_DOUBLE_EQ(a.curve[k].success_rate, b.curve[k].success_rate);
    EXPECT_DOUBLE_EQ(a.curve[k].collision_rate, b.curve[k].collision_rate);
  }
  EXPECT_EQ(a.env_steps, b.env_steps);
  EXPECT_EQ(a.convergence_episode, b.convergence_episode);
}

TEST(Transitions, BinaryRoundTripIsExact) {
  Rng rng(3);
  sac::Transition t;
  t.s = VectorXd::NullaryExpr(6, [&] { return rng.normal(); });
  t.a = VectorXd::NullaryExpr(2, [&] { return rng.normal(); });
  t.r = -13.25;
  t.s_next = VectorXd::NullaryExpr(6, [&] { return rng.normal(); });
  t.done = true;
  t.next_index_none = true;

  std::stringstream ss;
  hrl::write_transition(ss, t);
  sac::Transition u = hrl::read_transition(ss);
  EXPECT_TRUE(u.s.isApprox(t.s, 0.0));
  EXPECT_TRUE(u.a.isApprox(t.a, 0.0));
  EXPECT_TRUE(u.s_next.isApprox(t.s_next, 0.0));
  EXPECT_DOUBLE_EQ(u.r, t.r);
  EXPECT_EQ(u.done, t.done);
  EXPECT_EQ(u.next_index_none, t.next_index_none);

  std::stringstream truncated;
  hrl::write_transition(truncated, t);
  truncated.str(truncated.str().substr(0, 20));
  EXPECT_THROW(hrl::read_transition(truncated), std::runtime_error);
}

}  // namespace
