#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "btadapt/bt.hpp"
#include "btadapt/env2d.hpp"
#include "btadapt/sac.hpp"
#include "btadapt/sampling.hpp"

namespace btadapt::hrl {

using Eigen::VectorXd;

// Upper-level action dimension: the widest parameter slot, not the stacked
// width — the policy emits one slot's worth of parameters per query.
inline int compute_p(const std::vector<int>& slot_dims) {
  if (slot_dims.empty()) throw std::invalid_argument("compute_p: empty slot list");
  return *std::max_element(slot_dims.begin(), slot_dims.end());
}

enum class IndexEncoding { Scalar, OneHot };

// Builds the upper-level observation concat(context, node-index, robot
// state), all components normalized into [-1, 1]; the scalar encoding uses
// -1.5 as the "no successor node" sentinel, the one-hot encoding an all-zero
// block.
struct ObsCodec {
  env::EnvConfig env_cfg;
  IndexEncoding encoding = IndexEncoding::Scalar;
  int n_actions = 0;

  static constexpr double kNoneSentinel = -1.5;

  int obs_dim() const {
    return 3 + (encoding == IndexEncoding::Scalar ? 1 : n_actions) + 2;
  }

  VectorXd encode(const env::Context& c, std::optional<int> index,
                  const env::State2D& x) const {
    auto unit = [](double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; };
    VectorXd o(obs_dim());
    o(0) = unit(c.h_o, env_cfg.h_o_min, env_cfg.h_o_max);
    o(1) = unit(c.w_o, env_cfg.w_o_min, env_cfg.w_o_max);
    o(2) = unit(c.x_o, env_cfg.x_o_min, env_cfg.x_o_max);
    int pos = 3;
    if (encoding == IndexEncoding::Scalar) {
      if (!index) {
        o(pos) = kNoneSentinel;
      } else if (n_actions <= 1) {
        o(pos) = 0.0;
      } else {
        o(pos) = -1.0 + 2.0 * (*index - 1) / (n_actions - 1);
      }
      ++pos;
    } else {
      for (int k = 0; k < n_actions; ++k) o(pos + k) = 0.0;
      if (index) {
        if (*index < 1 || *index > n_actions)
          throw std::invalid_argument("ObsCodec: index out of range");
        o(pos + *index - 1) = 1.0;
      }
      pos += n_actions;
    }
    o(pos) = unit(x.x, env_cfg.x_min, env_cfg.x_max);
    o(pos + 1) = unit(x.z, env_cfg.z_min, env_cfg.z_max);
    return o;
  }
};

struct AnLog {
  int index = 0;
  VectorXd theta_hat;
  double reward = 0.0;
  int steps = 0;  // waypoints traversed by this motion
};

struct EpisodeRecord {
  env::Context context{};
  double total_reward = 0.0;
  bool success = false;
  bool collision = false;
  bool forbidden = false;
  bool structural_failure = false;  // tree failed with no collision cause
  int n_steps = 0;
  std::vector<AnLog> an_log;
  int transitions_pushed = 0;
};

// Hooks into every stage of an episode, used by diagnostics and by the
// protocol-conformance checks.
class EpisodeObserver {
 public:
  virtual ~EpisodeObserver() = default;
  virtual void on_context(const env::Context&) {}
  virtual void on_tick(bt::NodeStatus, std::optional<int> active) {}
  virtual void on_params(int /*index*/, const VectorXd&) {}
  virtual void on_motion(int /*index*/, const env::MotionOutcome&) {}
  virtual void on_transition(const sac::Transition&) {}
  virtual void on_update() {}
};

enum class EpisodeMode { TrainStochastic, EvalDeterministic };

// Shared mutable state across a training run's episodes.
struct TrainState {
  long long env_steps = 0;  // executed Action-Node motions
};

// Runs one episode: tick the tree for the active Action Node, query the
// upper-level policy for that node's parameters, execute the motion, store
// the (obs, theta, reward, next-obs) transition and update the learner.
// Evaluation mode uses deterministic actions and leaves the buffer alone.
inline EpisodeRecord run_episode(env::Env& environment, bt::BehaviorTree& tree,
                                 sac::SacAgent& agent, sac::ReplayBuffer& buffer,
                                 const ObsCodec& codec, const env::Context& c,
                                 EpisodeMode mode, Rng& rng, TrainState* train_state = nullptr,
                                 EpisodeObserver* observer = nullptr) {
  const bool train = mode == EpisodeMode::TrainStochastic;
  EpisodeRecord rec;
  rec.context = c;

  env::State2D x = environment.reset(c);
  tree.halt();
  if (observer) observer->on_context(c);
  env::GuardWorld world(environment);

  bt::TickResult tick = tree.tick(world);
  if (observer) observer->on_tick(tick.status, tick.active_action);

  while (true) {
    if (tick.status != bt::NodeStatus::Running) {
      // Tree resolved without an active node: only reachable here before any
      // motion ran, i.e. a structurally failing tree.
      rec.structural_failure = tick.status == bt::NodeStatus::Failure;
      break;
    }
    const int i_t = *tick.active_action;
    x = environment.position();
    VectorXd s_t = codec.encode(c, i_t, x);

    VectorXd theta;
    if (train && train_state &&
        train_state->env_steps < agent.config().warmup_steps) {
      theta = agent.random_action(rng);
    } else {
      theta = agent.act(s_t, mode == EpisodeMode::EvalDeterministic, rng);
    }
    tree.set_slot_params(i_t, std::span<const double>(theta.data(),
                                                      static_cast<std::size_t>(theta.size())));
    if (observer) observer->on_params(i_t, theta);

    const bt::ActionSlot& slot = tree.slot(i_t);
    std::array<double, 2> delta{};
    bool bounded = true;
    if (slot.fixed_target) {
      delta = {(*slot.fixed_target)[0] - x.x, (*slot.fixed_target)[1] - x.z};
      bounded = false;
    } else if (slot.param_dim >= 2) {
      delta = {slot.params[0], slot.params[1]};
    }
    env::MotionOutcome motion = environment.execute_motion(delta, bounded);
    if (observer) observer->on_motion(i_t, motion);

    // Map the motion outcome back into the tree. Violations surface through
    // the reactive guard on the next tick; a completed motion reports
    // success; goal/budget termination short-circuits without another tick.
    bt::TickResult next_tick{bt::NodeStatus::Success, std::nullopt};
    bool ticked = false;
    if (motion.terminal == env::Terminal::Collision ||
        motion.terminal == env::Terminal::ForbiddenZone) {
      next_tick = tree.tick(world);
      ticked = true;
    } else if (!environment.done()) {
      tree.mark_action_result(i_t, bt::NodeStatus::Success);
      next_tick = tree.tick(world);
      ticked = true;
    }
    if (observer && ticked) observer->on_tick(next_tick.status, next_tick.active_action);

    const bool done = environment.done() || next_tick.status != bt::NodeStatus::Running;
    std::optional<int> next_index =
        done ? std::nullopt : next_tick.active_action;
    VectorXd s_next = codec.encode(c, next_index, environment.position());

    rec.total_reward += motion.reward;
    rec.an_log.push_back(
        {i_t, theta, motion.reward, static_cast<int>(motion.waypoints.size())});

    if (train) {
      sac::Transition t;
      t.s = std::move(s_t);
      t.a = theta;
      t.r = motion.reward;
      t.s_next = std::move(s_next);
      t.done = done;
      t.next_index_none = !next_index.has_value();
      buffer.push(t);
      if (observer) observer->on_transition(t);
      ++rec.transitions_pushed;
      if (train_state) {
        ++train_state->env_steps;
        if (train_state->env_steps >= agent.config().warmup_steps &&
            buffer.ready(agent.config().batch)) {
          for (int k = 0; k < agent.config().updates_per_step; ++k) {
            agent.update(buffer.sample(agent.config().batch, rng), rng);
            if (observer) observer->on_update();
          }
        }
      }
    }

    if (done) {
      rec.structural_failure = next_tick.status == bt::NodeStatus::Failure &&
                               motion.terminal != env::Terminal::Collision &&
                               motion.terminal != env::Terminal::ForbiddenZone;
      break;
    }
    tick = next_tick;
  }

  rec.n_steps = environment.steps();
  rec.success = environment.terminal() == env::Terminal::GoalReached;
  rec.collision = environment.terminal() == env::Terminal::Collision;
  rec.forbidden = environment.terminal() == env::Terminal::ForbiddenZone;
  return rec;
}

// Deterministic evaluation of the current policy over a context list.
inline sampling::CurvePoint eval_on_contexts(env::Env& environment, bt::BehaviorTree& tree,
                                             sac::SacAgent& agent, sac::ReplayBuffer& buffer,
                                             const ObsCodec& codec,
                                             const std::vector<env::Context>& contexts,
                                             int episode_no, Rng& rng) {
  std::vector<double> rewards;
  int successes = 0, violations = 0;
  for (const auto& c : contexts) {
    EpisodeRecord r = run_episode(environment, tree, agent, buffer, codec, c,
                                  EpisodeMode::EvalDeterministic, rng);
    rewards.push_back(r.total_reward);
    successes += r.success ? 1 : 0;
    violations += (r.collision || r.forbidden) ? 1 : 0;
  }
  auto ms = sampling::mean_std(rewards);
  sampling::CurvePoint p;
  p.episode = episode_no;
  p.mean_reward = ms.mean;
  p.std_reward = ms.std;
  p.success_rate = static_cast<double>(successes) / contexts.size();
  p.collision_rate = static_cast<double>(violations) / contexts.size();
  return p;
}

struct TrainConfig {
  env::EnvConfig env_cfg;
  sac::SacConfig sac_cfg;       // obs/act dims are filled in by train_run
  IndexEncoding encoding = IndexEncoding::Scalar;
  int n_motions = 3;            // parameterized intermediate motions
  int episodes = 4000;
  int eval_period = 25;
  int n_train_contexts = 20;
  std::uint64_t context_seed = 1;
  std::uint64_t seed = 1;
};

// A single training episode folded into the curve-point schema: the std
// column is 0 and the rate columns carry the episode's boolean outcomes.
inline sampling::CurvePoint episode_point(int episode, const EpisodeRecord& rec) {
  sampling::CurvePoint p;
  p.episode = episode;
  p.mean_reward = rec.total_reward;
  p.success_rate = rec.success ? 1.0 : 0.0;
  p.collision_rate = (rec.collision || rec.forbidden) ? 1.0 : 0.0;
  return p;
}

struct TrainResult {
  sampling::LearningCurve curve;
  sampling::LearningCurve episode_curve;  // per-episode stochastic returns
  std::optional<int> convergence_episode;
  std::unique_ptr<sac::SacAgent> agent;
  bool diverged = false;
  long long env_steps = 0;
  double wall_seconds = 0.0;
  sampling::ContextSet train_contexts;
};

// Full training run: episodes cycle round-robin (reshuffled each epoch)
// through the training contexts; every eval_period episodes the policy is
// evaluated deterministically on all of them.
inline TrainResult train_run(const TrainConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  res.train_contexts = sampling::sample_contexts(cfg.env_cfg, cfg.n_train_contexts,
                                                 cfg.context_seed);

  bt::BehaviorTree tree =
      bt::BehaviorTree::chain(cfg.n_motions, {cfg.env_cfg.goal.x, cfg.env_cfg.goal.z});
  ObsCodec codec{cfg.env_cfg, cfg.encoding, tree.n_actions()};

  sac::SacConfig scfg = cfg.sac_cfg;
  scfg.obs_dim = codec.obs_dim();
  scfg.act_dim = compute_p(tree.slot_dims());
  if (scfg.action_scale.size() == 0)
    scfg.action_scale = VectorXd::Constant(scfg.act_dim, cfg.env_cfg.action_bound);

  Rng rng(cfg.seed);
  res.agent = std::make_unique<sac::SacAgent>(scfg, rng);
  sac::ReplayBuffer buffer(scfg.obs_dim, scfg.act_dim, scfg.buffer_capacity);
  env::Env environment(cfg.env_cfg);
  TrainState state;

  std::vector<std::size_t> order(res.train_contexts.contexts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  res.curve.push_back(eval_on_contexts(environment, tree, *res.agent, buffer, codec,
                                       res.train_contexts.contexts, 0, rng));
  try {
    for (int e = 1; e <= cfg.episodes; ++e) {
      std::size_t slot = static_cast<std::size_t>(e - 1) % order.size();
      if (slot == 0) rng.shuffle(order);
      const env::Context& c = res.train_contexts.contexts[order[slot]];
      EpisodeRecord rec = run_episode(environment, tree, *res.agent, buffer, codec, c,
                                      EpisodeMode::TrainStochastic, rng, &state);
      res.episode_curve.push_back(episode_point(e, rec));
      if (e % cfg.eval_period == 0 || e == cfg.episodes) {
        res.curve.push_back(eval_on_contexts(environment, tree, *res.agent, buffer, codec,
                                             res.train_contexts.contexts, e, rng));
      }
    }
  } catch (const std::runtime_error&) {
    res.diverged = true;  // partial curve is preserved
  }
  res.env_steps = state.env_steps;
  res.convergence_episode = sampling::detect_convergence(res.episode_curve);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// Exact binary round-trip for transitions (diagnostic dumps, replay).
inline void write_transition(std::ostream& os, const sac::Transition& t) {
  auto put = [&os](const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  std::int64_t sd = t.s.size(), ad = t.a.size();
  put(&sd, sizeof sd);
  put(&ad, sizeof ad);
  put(t.s.data(), sizeof(double) * t.s.size());
  put(t.a.data(), sizeof(double) * t.a.size());
  put(&t.r, sizeof t.r);
  put(t.s_next.data(), sizeof(double) * t.s_next.size());
  char flags[2] = {t.done ? char(1) : char(0), t.next_index_none ? char(1) : char(0)};
  put(flags, 2);
}

inline sac::Transition read_transition(std::istream& is) {
  auto get = [&is](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("truncated transition record");
  };
  std::int64_t sd = 0, ad = 0;
  get(&sd, sizeof sd);
  get(&ad, sizeof ad);
  if (sd < 0 || ad < 0 || sd > (1 << 20) || ad > (1 << 20))
    throw std::runtime_error("corrupt transition record");
  sac::Transition t;
  t.s.resize(sd);
  t.a.resize(ad);
  t.s_next.resize(sd);
  get(t.s.data(), sizeof(double) * t.s.size());
  get(t.a.data(), sizeof(double) * t.a.size());
  get(&t.r, sizeof t.r);
  get(t.s_next.data(), sizeof(double) * t.s_next.size());
  char flags[2];
  get(flags, 2);
  t.done = flags[0] != 0;
  t.next_index_none = flags[1] != 0;
  return t;
}

}  // namespace btadapt::hrl
