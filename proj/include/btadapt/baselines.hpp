#pragma once

#include <array>
#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "btadapt/bo.hpp"
#include "btadapt/hrl.hpp"

namespace btadapt::baselines {

using Eigen::VectorXd;

// Observation for the flat agent: normalized context plus normalized robot
// position, no tree structure.
inline VectorXd flat_obs(const env::EnvConfig& cfg, const env::Context& c,
                         const env::State2D& x) {
  auto unit = [](double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; };
  VectorXd o(5);
  o(0) = unit(c.h_o, cfg.h_o_min, cfg.h_o_max);
  o(1) = unit(c.w_o, cfg.w_o_min, cfg.w_o_max);
  o(2) = unit(c.x_o, cfg.x_o_min, cfg.x_o_max);
  o(3) = unit(x.x, cfg.x_min, cfg.x_max);
  o(4) = unit(x.z, cfg.z_min, cfg.z_max);
  return o;
}

// Flat SAC baseline: each agent action is one bounded linear motion, no
// Behavior Tree in the loop. Shares the reward function and the waypoint
// budget with the hierarchical runs; a motion cap guards against stalling on
// degenerate zero-length actions that consume no waypoint budget.
inline hrl::EpisodeRecord flat_episode(env::Env& environment, sac::SacAgent& agent,
                                       sac::ReplayBuffer& buffer, const env::Context& c,
                                       hrl::EpisodeMode mode, Rng& rng,
                                       hrl::TrainState* train_state = nullptr,
                                       int max_motions = 256) {
  const bool train = mode == hrl::EpisodeMode::TrainStochastic;
  hrl::EpisodeRecord rec;
  rec.context = c;
  environment.reset(c);
  const env::EnvConfig& cfg = environment.config();

  for (int m = 1; m <= max_motions && !environment.done(); ++m) {
    VectorXd s = flat_obs(cfg, c, environment.position());
    VectorXd a;
    if (train && train_state && train_state->env_steps < agent.config().warmup_steps) {
      a = agent.random_action(rng);
    } else {
      a = agent.act(s, mode == hrl::EpisodeMode::EvalDeterministic, rng);
    }
    auto motion = environment.execute_motion({a(0), a(1)});
    const bool done = environment.done() || m == max_motions;
    VectorXd s_next = flat_obs(cfg, c, environment.position());

    rec.total_reward += motion.reward;
    rec.an_log.push_back({m, a, motion.reward, static_cast<int>(motion.waypoints.size())});

    if (train) {
      sac::Transition t;
      t.s = std::move(s);
      t.a = a;
      t.r = motion.reward;
      t.s_next = std::move(s_next);
      t.done = done;
      t.next_index_none = done;
      buffer.push(t);
      ++rec.transitions_pushed;
      if (train_state) {
        ++train_state->env_steps;
        if (train_state->env_steps >= agent.config().warmup_steps &&
            buffer.ready(agent.config().batch)) {
          for (int k = 0; k < agent.config().updates_per_step; ++k)
            agent.update(buffer.sample(agent.config().batch, rng), rng);
        }
      }
    }
  }

  rec.n_steps = environment.steps();
  rec.success = environment.terminal() == env::Terminal::GoalReached;
  rec.collision = environment.terminal() == env::Terminal::Collision;
  rec.forbidden = environment.terminal() == env::Terminal::ForbiddenZone;
  return rec;
}

// Executes the tree to completion with a fixed stacked parameter vector
// (slot-index order, each slot taking its own width). Shared by the
// episode-based baseline and by optimization over the full vector.
inline hrl::EpisodeRecord run_tree_with_params(env::Env& environment, bt::BehaviorTree& tree,
                                               const VectorXd& stacked, const env::Context& c) {
  if (stacked.size() != tree.stacked_dim())
    throw std::invalid_argument("run_tree_with_params: wrong stacked size");
  hrl::EpisodeRecord rec;
  rec.context = c;
  environment.reset(c);
  tree.halt();

  Eigen::Index off = 0;
  for (int idx : tree.action_indices()) {
    int d = tree.slot(idx).param_dim;
    if (d > 0) {
      std::vector<double> part(stacked.data() + off, stacked.data() + off + d);
      tree.set_slot_params(idx, part);
      off += d;
    }
  }

  env::GuardWorld world(environment);
  bt::TickResult tick = tree.tick(world);
  while (tick.status == bt::NodeStatus::Running && !environment.done()) {
    const int i_t = *tick.active_action;
    const bt::ActionSlot& slot = tree.slot(i_t);
    std::array<double, 2> delta{};
    bool bounded = true;
    env::State2D x = environment.position();
    if (slot.fixed_target) {
      delta = {(*slot.fixed_target)[0] - x.x, (*slot.fixed_target)[1] - x.z};
      bounded = false;
    } else if (slot.param_dim >= 2) {
      delta = {slot.params[0], slot.params[1]};
    }
    auto motion = environment.execute_motion(delta, bounded);
    rec.total_reward += motion.reward;
    VectorXd used = VectorXd::Zero(static_cast<Eigen::Index>(slot.params.size()));
    for (std::size_t k = 0; k < slot.params.size(); ++k)
      used(static_cast<Eigen::Index>(k)) = slot.params[k];
    rec.an_log.push_back({i_t, used, motion.reward, static_cast<int>(motion.waypoints.size())});
    if (motion.terminal == env::Terminal::Collision ||
        motion.terminal == env::Terminal::ForbiddenZone) {
      tick = tree.tick(world);  // reactive guard halts the tree
    } else if (!environment.done()) {
      tree.mark_action_result(i_t, bt::NodeStatus::Success);
      tick = tree.tick(world);
    } else {
      break;
    }
  }

  rec.n_steps = environment.steps();
  rec.success = environment.terminal() == env::Terminal::GoalReached;
  rec.collision = environment.terminal() == env::Terminal::Collision;
  rec.forbidden = environment.terminal() == env::Terminal::ForbiddenZone;
  rec.structural_failure = !environment.done() && tick.status == bt::NodeStatus::Failure &&
                           !rec.collision && !rec.forbidden;
  return rec;
}

// Episode-based upper level: one context-conditioned action per episode
// covering every slot at once, rewarded with the episodic return.
inline VectorXd context_obs(const env::EnvConfig& cfg, const env::Context& c) {
  auto unit = [](double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; };
  VectorXd o(3);
  o(0) = unit(c.h_o, cfg.h_o_min, cfg.h_o_max);
  o(1) = unit(c.w_o, cfg.w_o_min, cfg.w_o_max);
  o(2) = unit(c.x_o, cfg.x_o_min, cfg.x_o_max);
  return o;
}

inline hrl::EpisodeRecord episode_based_run(env::Env& environment, bt::BehaviorTree& tree,
                                            sac::SacAgent& agent, sac::ReplayBuffer& buffer,
                                            const env::Context& c, hrl::EpisodeMode mode,
                                            Rng& rng, hrl::TrainState* train_state = nullptr) {
  const bool train = mode == hrl::EpisodeMode::TrainStochastic;
  const env::EnvConfig& cfg = environment.config();
  VectorXd s = context_obs(cfg, c);

  VectorXd theta;
  if (train && train_state && train_state->env_steps < agent.config().warmup_steps) {
    theta = agent.random_action(rng);
  } else {
    theta = agent.act(s, mode == hrl::EpisodeMode::EvalDeterministic, rng);
  }

  hrl::EpisodeRecord rec = run_tree_with_params(environment, tree, theta, c);

  if (train) {
    sac::Transition t;
    t.s = s;
    t.a = theta;
    t.r = rec.total_reward;
    t.s_next = s;  // terminal: unused by the bootstrap
    t.done = true;
    t.next_index_none = true;
    buffer.push(t);
    rec.transitions_pushed = 1;
    if (train_state) {
      ++train_state->env_steps;
      if (train_state->env_steps >= agent.config().warmup_steps &&
          buffer.ready(agent.config().batch)) {
        for (int k = 0; k < agent.config().updates_per_step; ++k)
          agent.update(buffer.sample(agent.config().batch, rng), rng);
      }
    }
  }
  return rec;
}

namespace detail {

// Shared training protocol: round-robin over the training contexts with a
// per-epoch shuffle, deterministic evaluation on all of them every
// eval_period episodes (and before any training).
template <typename TrainEp, typename EvalEp>
hrl::TrainResult train_loop(const hrl::TrainConfig& cfg, int obs_dim, int act_dim,
                            TrainEp&& train_episode, EvalEp&& eval_episode) {
  auto t0 = std::chrono::steady_clock::now();
  hrl::TrainResult res;
  res.train_contexts =
      sampling::sample_contexts(cfg.env_cfg, cfg.n_train_contexts, cfg.context_seed);

  sac::SacConfig scfg = cfg.sac_cfg;
  scfg.obs_dim = obs_dim;
  scfg.act_dim = act_dim;
  if (scfg.action_scale.size() == 0)
    scfg.action_scale = VectorXd::Constant(act_dim, cfg.env_cfg.action_bound);

  Rng rng(cfg.seed);
  res.agent = std::make_unique<sac::SacAgent>(scfg, rng);
  sac::ReplayBuffer buffer(scfg.obs_dim, scfg.act_dim, scfg.buffer_capacity);
  env::Env environment(cfg.env_cfg);
  hrl::TrainState state;

  auto eval_all = [&](int episode_no) {
    std::vector<double> rewards;
    int successes = 0, violations = 0;
    for (const auto& c : res.train_contexts.contexts) {
      hrl::EpisodeRecord r = eval_episode(environment, *res.agent, buffer, c, rng);
      rewards.push_back(r.total_reward);
      successes += r.success ? 1 : 0;
      violations += (r.collision || r.forbidden) ? 1 : 0;
    }
    auto ms = sampling::mean_std(rewards);
    sampling::CurvePoint p;
    p.episode = episode_no;
    p.mean_reward = ms.mean;
    p.std_reward = ms.std;
    p.success_rate = static_cast<double>(successes) / rewards.size();
    p.collision_rate = static_cast<double>(violations) / rewards.size();
    res.curve.push_back(p);
  };

  std::vector<std::size_t> order(res.train_contexts.contexts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  eval_all(0);
  try {
    for (int e = 1; e <= cfg.episodes; ++e) {
      std::size_t slot = static_cast<std::size_t>(e - 1) % order.size();
      if (slot == 0) rng.shuffle(order);
      const env::Context& c = res.train_contexts.contexts[order[slot]];
      hrl::EpisodeRecord rec = train_episode(environment, *res.agent, buffer, c, rng, state);
      res.episode_curve.push_back(hrl::episode_point(e, rec));
      if (e % cfg.eval_period == 0 || e == cfg.episodes) eval_all(e);
    }
  } catch (const std::runtime_error&) {
    res.diverged = true;
  }
  res.env_steps = state.env_steps;
  res.convergence_episode = sampling::detect_convergence(res.episode_curve);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace detail

inline hrl::TrainResult train_run_flat(const hrl::TrainConfig& cfg, int max_motions = 256) {
  return detail::train_loop(
      cfg, 5, 2,
      [max_motions](env::Env& e, sac::SacAgent& a, sac::ReplayBuffer& b, const env::Context& c,
                    Rng& r, hrl::TrainState& st) {
        return flat_episode(e, a, b, c, hrl::EpisodeMode::TrainStochastic, r, &st, max_motions);
      },
      [max_motions](env::Env& e, sac::SacAgent& a, sac::ReplayBuffer& b, const env::Context& c,
                    Rng& r) {
        return flat_episode(e, a, b, c, hrl::EpisodeMode::EvalDeterministic, r, nullptr,
                            max_motions);
      });
}

inline hrl::TrainResult train_run_episode(const hrl::TrainConfig& cfg) {
  auto tree = std::make_shared<bt::BehaviorTree>(
      bt::BehaviorTree::chain(cfg.n_motions, {cfg.env_cfg.goal.x, cfg.env_cfg.goal.z}));
  return detail::train_loop(
      cfg, 3, tree->stacked_dim(),
      [tree](env::Env& e, sac::SacAgent& a, sac::ReplayBuffer& b, const env::Context& c,
             Rng& r, hrl::TrainState& st) {
        return episode_based_run(e, *tree, a, b, c, hrl::EpisodeMode::TrainStochastic, r, &st);
      },
      [tree](env::Env& e, sac::SacAgent& a, sac::ReplayBuffer& b, const env::Context& c,
             Rng& r) {
        return episode_based_run(e, *tree, a, b, c, hrl::EpisodeMode::EvalDeterministic, r);
      });
}

// Optimizes one stacked parameter vector by maximizing episodic reward, per
// context by default or jointly across the whole set.
struct BtBoResult {
  std::vector<bo::BoTrace> traces;  // one per context (or a single shared one)
  bool shared = false;
};

inline BtBoResult bt_bo_optimize(env::Env& environment, bt::BehaviorTree& tree,
                                 const std::vector<env::Context>& contexts,
                                 const bo::BoConfig& cfg, Rng& rng, bool shared = false) {
  const double b = environment.config().action_bound;
  std::vector<sampling::Interval> bounds(static_cast<std::size_t>(tree.stacked_dim()),
                                         {-b, b});
  BtBoResult res;
  res.shared = shared;
  if (shared) {
    auto objective = [&](const VectorXd& theta) {
      double sum = 0.0;
      for (const auto& c : contexts)
        sum += run_tree_with_params(environment, tree, theta, c).total_reward;
      return sum / contexts.size();
    };
    res.traces.push_back(bo::optimize(objective, bounds, cfg, rng));
  } else {
    for (const auto& c : contexts) {
      auto objective = [&](const VectorXd& theta) {
        return run_tree_with_params(environment, tree, theta, c).total_reward;
      };
      res.traces.push_back(bo::optimize(objective, bounds, cfg, rng));
    }
  }
  return res;
}

}  // namespace btadapt::baselines
