#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "btadapt/bt.hpp"

namespace btadapt::env {

// Task variation: a rectangular obstacle [x_o, x_o+w_o] x [0, h_o] standing
// on the floor between start and goal.
struct Context {
  double h_o = 0.0;
  double w_o = 0.0;
  double x_o = 0.0;
};

struct State2D {
  double x = 0.0;
  double z = 0.0;
};

inline double distance(const State2D& a, const State2D& b) {
  return std::hypot(a.x - b.x, a.z - b.z);
}

struct EnvConfig {
  double x_min = 0.0, x_max = 1.0;
  double z_min = 0.0, z_max = 0.8;
  State2D start{0.05, 0.05};
  State2D goal{0.95, 0.05};
  double resolution = 0.01;   // waypoint spacing upper bound
  double eps_goal = 0.01;     // goal capture radius
  int max_steps = 200;        // episode waypoint budget
  double w_g = 0.1;           // goal-distance weight
  double w_c = 5.0;           // collision-avoidance weight
  double d_safe = 0.05;       // proximity penalty range
  double collision_penalty = -100.0;  // also applied on forbidden-zone entry
  double action_bound = 0.4;  // per-component bound on learned deltas
  bool forbidden_zone = false;
  double forbidden_height = 0.10;  // band height above the obstacle
  // Context sampling ranges.
  double h_o_min = 0.10, h_o_max = 0.40;
  double w_o_min = 0.05, w_o_max = 0.30;
  double x_o_min = 0.25, x_o_max = 0.55;
};

enum class Terminal { InProgress, GoalReached, Collision, ForbiddenZone, StepBudgetExhausted };

inline const char* to_string(Terminal t) {
  switch (t) {
    case Terminal::InProgress: return "in-progress";
    case Terminal::GoalReached: return "goal";
    case Terminal::Collision: return "collision";
    case Terminal::ForbiddenZone: return "forbidden";
    case Terminal::StepBudgetExhausted: return "budget";
  }
  return "?";
}

struct MotionOutcome {
  std::vector<State2D> waypoints;  // traversed waypoints, start excluded
  Terminal terminal = Terminal::InProgress;
  double reward = 0.0;
  int n_steps_so_far = 0;  // cumulative over the episode
};

inline bool collides(const Context& c, const State2D& p) {
  return p.x >= c.x_o && p.x <= c.x_o + c.w_o && p.z >= 0.0 && p.z <= c.h_o;
}

inline bool in_forbidden_zone(const EnvConfig& cfg, const Context& c, const State2D& p) {
  return p.x >= c.x_o && p.x <= c.x_o + c.w_o && p.z > c.h_o &&
         p.z <= c.h_o + cfg.forbidden_height;
}

// Euclidean distance from p to the closed obstacle rectangle (0 inside).
inline double obstacle_distance(const Context& c, const State2D& p) {
  double dx = std::max({c.x_o - p.x, p.x - (c.x_o + c.w_o), 0.0});
  double dz = std::max({0.0 - p.z, p.z - c.h_o, 0.0});
  return std::hypot(dx, dz);
}

// Unweighted reward components at a waypoint: goal distance and obstacle
// proximity. The step bonus is added separately on goal capture.
inline std::array<double, 2> waypoint_reward(const EnvConfig& cfg, const Context& c,
                                             const State2D& p) {
  double r_g = -distance(p, cfg.goal);
  double r_c = -std::max(0.0, 1.0 - obstacle_distance(c, p) / cfg.d_safe);
  return {r_g, r_c};
}

inline bool context_valid(const EnvConfig& cfg, const Context& c) {
  if (c.h_o < cfg.h_o_min || c.h_o > cfg.h_o_max) return false;
  if (c.w_o < cfg.w_o_min || c.w_o > cfg.w_o_max) return false;
  if (c.x_o < cfg.x_o_min || c.x_o > cfg.x_o_max) return false;
  // The obstacle must sit strictly between start and goal x.
  if (c.x_o <= cfg.start.x || c.x_o + c.w_o >= cfg.goal.x) return false;
  return true;
}

inline State2D clamp_to_workspace(const EnvConfig& cfg, State2D p) {
  p.x = std::clamp(p.x, cfg.x_min, cfg.x_max);
  p.z = std::clamp(p.z, cfg.z_min, cfg.z_max);
  return p;
}

// Traverses the straight segment from `from` towards `from + delta`,
// discretized at the configured resolution (end point included). Stops at the
// first waypoint that collides, enters the forbidden zone (when enabled),
// captures the goal, or exhausts the cumulative step budget. Each traversed
// waypoint contributes w_g*r_g + w_c*r_c; goal capture adds
// max_steps - n_steps, collision and forbidden-zone entry add the collision
// penalty.
//
// `enforce_bound` clamps delta components to the configured action bound; the
// fixed goal motion runs unbounded. Targets are always clamped to the
// workspace.
inline MotionOutcome execute_motion(const EnvConfig& cfg, const Context& c, State2D from,
                                    std::array<double, 2> delta, int n_steps_so_far,
                                    bool enforce_bound = true) {
  if (enforce_bound) {
    delta[0] = std::clamp(delta[0], -cfg.action_bound, cfg.action_bound);
    delta[1] = std::clamp(delta[1], -cfg.action_bound, cfg.action_bound);
  }
  State2D target = clamp_to_workspace(cfg, {from.x + delta[0], from.z + delta[1]});

  MotionOutcome out;
  out.n_steps_so_far = n_steps_so_far;

  double len = distance(from, target);
  int k = static_cast<int>(std::ceil(len / cfg.resolution));
  for (int i = 1; i <= k; ++i) {
    double t = static_cast<double>(i) / k;
    State2D p{from.x + t * (target.x - from.x), from.z + t * (target.z - from.z)};
    out.waypoints.push_back(p);
    ++out.n_steps_so_far;

    auto [r_g, r_c] = waypoint_reward(cfg, c, p);
    out.reward += cfg.w_g * r_g + cfg.w_c * r_c;

    if (collides(c, p)) {
      out.terminal = Terminal::Collision;
      out.reward += cfg.collision_penalty;
      return out;
    }
    if (cfg.forbidden_zone && in_forbidden_zone(cfg, c, p)) {
      out.terminal = Terminal::ForbiddenZone;
      out.reward += cfg.collision_penalty;
      return out;
    }
    if (distance(p, cfg.goal) <= cfg.eps_goal) {
      out.terminal = Terminal::GoalReached;
      out.reward += cfg.max_steps - out.n_steps_so_far;
      return out;
    }
    if (out.n_steps_so_far >= cfg.max_steps) {
      out.terminal = Terminal::StepBudgetExhausted;
      return out;
    }
  }
  out.terminal = Terminal::InProgress;
  return out;
}

// Stateful episode wrapper: tracks position, cumulative steps and the
// terminal event across motions.
class Env {
 public:
  explicit Env(EnvConfig cfg) : cfg_(std::move(cfg)) {}

  const EnvConfig& config() const { return cfg_; }
  const Context& context() const { return ctx_; }

  State2D reset(const Context& c) {
    if (!context_valid(cfg_, c)) throw std::invalid_argument("invalid context");
    ctx_ = c;
    pos_ = cfg_.start;
    n_steps_ = 0;
    terminal_ = Terminal::InProgress;
    clamp_count_ = 0;
    return pos_;
  }

  MotionOutcome execute_motion(std::array<double, 2> delta, bool enforce_bound = true) {
    if (terminal_ != Terminal::InProgress)
      throw std::logic_error("execute_motion after episode ended");
    if (enforce_bound &&
        (std::abs(delta[0]) > cfg_.action_bound || std::abs(delta[1]) > cfg_.action_bound))
      ++clamp_count_;
    MotionOutcome out =
        env::execute_motion(cfg_, ctx_, pos_, delta, n_steps_, enforce_bound);
    if (!out.waypoints.empty()) pos_ = out.waypoints.back();
    n_steps_ = out.n_steps_so_far;
    if (out.terminal != Terminal::InProgress) terminal_ = out.terminal;
    return out;
  }

  State2D position() const { return pos_; }
  int steps() const { return n_steps_; }
  Terminal terminal() const { return terminal_; }
  bool done() const { return terminal_ != Terminal::InProgress; }
  int clamp_count() const { return clamp_count_; }

 private:
  EnvConfig cfg_;
  Context ctx_{};
  State2D pos_{};
  int n_steps_ = 0;
  Terminal terminal_ = Terminal::InProgress;
  int clamp_count_ = 0;
};

// Predicate source for the tree's reactive guard: "collision-free" holds
// while the robot is neither in the obstacle nor (when enabled) in the
// forbidden band.
class GuardWorld : public bt::WorldView {
 public:
  explicit GuardWorld(const Env& env) : env_(&env) {}

  bool evaluate(std::string_view predicate_id) const override {
    if (predicate_id == "collision-free") {
      const State2D p = env_->position();
      const Context& c = env_->context();
      if (collides(c, p)) return false;
      if (env_->config().forbidden_zone && in_forbidden_zone(env_->config(), c, p))
        return false;
      return true;
    }
    throw std::runtime_error("unknown predicate: " + std::string(predicate_id));
  }

 private:
  const Env* env_;
};

}  // namespace btadapt::env
