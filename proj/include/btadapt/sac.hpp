#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "btadapt/nn.hpp"
#include "btadapt/rng.hpp"

namespace btadapt::sac {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One off-policy transition. For the hierarchical upper level the state is
// concat(context, action-node index, robot state) and `next_index_none`
// records that the episode ended with no successor node.
struct Transition {
  VectorXd s;
  VectorXd a;
  double r = 0.0;
  VectorXd s_next;
  bool done = false;
  bool next_index_none = false;
};

class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int act_dim, std::size_t capacity)
      : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("buffer capacity must be positive");
  }

  void push(const Transition& t) {
    if (t.s.size() != obs_dim_ || t.s_next.size() != obs_dim_ || t.a.size() != act_dim_)
      throw std::invalid_argument("transition dims do not match buffer schema");
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  bool ready(int batch) const { return data_.size() >= static_cast<std::size_t>(batch); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  struct Batch {
    MatrixXd s, a, s_next;  // columns are samples
    VectorXd r, done;
  };

  // Uniform i.i.d. sampling with replacement.
  Batch sample(int batch, Rng& rng) const {
    if (!ready(batch)) throw std::logic_error("replay buffer underfull");
    Batch b;
    b.s.resize(obs_dim_, batch);
    b.a.resize(act_dim_, batch);
    b.s_next.resize(obs_dim_, batch);
    b.r.resize(batch);
    b.done.resize(batch);
    for (int j = 0; j < batch; ++j) {
      const Transition& t = data_[rng.index(data_.size())];
      b.s.col(j) = t.s;
      b.a.col(j) = t.a;
      b.s_next.col(j) = t.s_next;
      b.r(j) = t.r;
      b.done(j) = t.done ? 1.0 : 0.0;
    }
    return b;
  }

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  std::size_t capacity() const { return capacity_; }

 private:
  int obs_dim_, act_dim_;
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

struct SacConfig {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<int> hidden{64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  int batch = 256;
  std::size_t buffer_capacity = 1'000'000;
  double target_entropy = 0.0;  // 0 -> default to -act_dim
  bool auto_alpha = true;
  double alpha_init = 0.2;
  VectorXd action_scale;  // empty -> all ones
  int warmup_steps = 500;   // random actions before the actor is consulted
  int updates_per_step = 1;
};

// Twin-critic soft actor-critic with automatic entropy temperature.
class SacAgent {
 public:
  // Optimizers hold references into the nets: the agent must stay put.
  SacAgent(const SacAgent&) = delete;
  SacAgent& operator=(const SacAgent&) = delete;

  SacAgent(SacConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    if (cfg_.obs_dim <= 0 || cfg_.act_dim <= 0)
      throw std::invalid_argument("SacConfig needs positive dims");
    if (cfg_.target_entropy == 0.0) cfg_.target_entropy = -cfg_.act_dim;
    if (cfg_.action_scale.size() == 0) cfg_.action_scale = VectorXd::Ones(cfg_.act_dim);
    if (cfg_.alpha_init <= 0.0) throw std::invalid_argument("alpha must stay positive");

    actor_ = nn::GaussianHead(cfg_.obs_dim, cfg_.act_dim, cfg_.hidden, cfg_.action_scale,
                              rng, "actor");
    std::vector<int> qsizes{cfg_.obs_dim + cfg_.act_dim};
    qsizes.insert(qsizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    qsizes.push_back(1);
    q1_ = nn::Mlp(qsizes, rng, "q1");
    q2_ = nn::Mlp(qsizes, rng, "q2");
    q1_tgt_ = q1_;
    q2_tgt_ = q2_;

    log_alpha_ = MatrixXd::Constant(1, 1, std::log(cfg_.alpha_init));
    log_alpha_grad_ = MatrixXd::Zero(1, 1);

    actor_opt_.emplace(actor_.trunk().params(), cfg_.lr);
    q1_opt_.emplace(q1_.params(), cfg_.lr);
    q2_opt_.emplace(q2_.params(), cfg_.lr);
    alpha_opt_.emplace(std::vector<nn::ParamRef>{{&log_alpha_, &log_alpha_grad_, "log_alpha"}},
                       cfg_.lr);
  }

  VectorXd act(const VectorXd& s, bool deterministic, Rng& rng) {
    if (deterministic) return actor_.mode(s).col(0);
    return actor_.sample(s, rng).actions.col(0);
  }

  VectorXd random_action(Rng& rng) const {
    VectorXd a(cfg_.act_dim);
    for (int d = 0; d < cfg_.act_dim; ++d)
      a(d) = rng.uniform(-cfg_.action_scale(d), cfg_.action_scale(d));
    return a;
  }

  struct Losses {
    double critic = 0.0;
    double actor = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;  // -mean log-prob of fresh actions
  };

  // One gradient step on critics, actor and temperature from the given
  // minibatch, then a Polyak target update.
  Losses update(const ReplayBuffer::Batch& b, Rng& rng) {
    const int B = static_cast<int>(b.r.size());
    const double alpha = std::exp(log_alpha_(0, 0));

    // Soft Bellman targets from target critics; bootstrap masked by done.
    auto next = sample_actions(b.s_next, rng);
    VectorXd q_next = min_q(q1_tgt_, q2_tgt_, b.s_next, next.actions);
    last_targets_ = (b.r.array() +
                     cfg_.gamma * (1.0 - b.done.array()) *
                         (q_next.array() - alpha * next.log_prob.array()))
                        .matrix();
    if (!last_targets_.allFinite()) throw std::runtime_error("non-finite critic target");

    // Critic regression.
    MatrixXd sa(cfg_.obs_dim + cfg_.act_dim, B);
    sa.topRows(cfg_.obs_dim) = b.s;
    sa.bottomRows(cfg_.act_dim) = b.a;
    VectorXd q1v = q1_.forward(sa).row(0).transpose();
    VectorXd d1 = q1v - last_targets_;
    q1_.zero_grad();
    q1_.backward((2.0 / B) * d1.transpose());
    q1_opt_->step();
    q1_.zero_grad();

    VectorXd q2v = q2_.forward(sa).row(0).transpose();
    VectorXd d2 = q2v - last_targets_;
    q2_.zero_grad();
    q2_.backward((2.0 / B) * d2.transpose());
    q2_opt_->step();
    q2_.zero_grad();

    Losses out;
    out.critic = (d1.squaredNorm() + d2.squaredNorm()) / B;

    // Actor: fresh reparameterized actions through the updated critics.
    auto fresh = sample_actions_cached(b.s, rng);
    MatrixXd sa_pi(cfg_.obs_dim + cfg_.act_dim, B);
    sa_pi.topRows(cfg_.obs_dim) = b.s;
    sa_pi.bottomRows(cfg_.act_dim) = fresh.actions;
    VectorXd q1pi = q1_.forward(sa_pi).row(0).transpose();
    VectorXd q2pi = q2_.forward(sa_pi).row(0).transpose();
    MatrixXd din1 = q1_.backward(pick_mask(q1pi, q2pi, true, B),
                                 /*accumulate_params=*/false);
    MatrixXd din2 = q2_.backward(pick_mask(q1pi, q2pi, false, B),
                                 /*accumulate_params=*/false);
    MatrixXd dA = -(din1.bottomRows(cfg_.act_dim) + din2.bottomRows(cfg_.act_dim));
    VectorXd dlogp = VectorXd::Constant(B, alpha / B);
    actor_.trunk().zero_grad();
    actor_.backward(dA, dlogp);
    actor_opt_->step();
    actor_.trunk().zero_grad();

    VectorXd min_pi = q1pi.cwiseMin(q2pi);
    out.actor = (alpha * fresh.log_prob.array() - min_pi.array()).mean();
    out.entropy = -fresh.log_prob.mean();

    // Temperature: drive expected log-prob toward the target entropy.
    if (cfg_.auto_alpha) {
      log_alpha_grad_(0, 0) = -(fresh.log_prob.array() + cfg_.target_entropy).mean();
      alpha_opt_->step();
      log_alpha_grad_.setZero();
    }
    out.alpha = std::exp(log_alpha_(0, 0));

    polyak(q1_tgt_, q1_, cfg_.tau);
    polyak(q2_tgt_, q2_, cfg_.tau);
    ++n_updates_;
    return out;
  }

  const SacConfig& config() const { return cfg_; }
  nn::GaussianHead& actor() { return actor_; }
  nn::Mlp& q1() { return q1_; }
  nn::Mlp& q2() { return q2_; }
  nn::Mlp& q1_target() { return q1_tgt_; }
  nn::Mlp& q2_target() { return q2_tgt_; }
  MatrixXd& log_alpha() { return log_alpha_; }
  double alpha() const { return std::exp(log_alpha_(0, 0)); }
  nn::Adam& actor_opt() { return *actor_opt_; }
  nn::Adam& q1_opt() { return *q1_opt_; }
  nn::Adam& q2_opt() { return *q2_opt_; }
  nn::Adam& alpha_opt() { return *alpha_opt_; }
  long long n_updates() const { return n_updates_; }
  void set_n_updates(long long n) { n_updates_ = n; }

  // Q estimate of the first (min-of-twins) critic pair at a single (s, a).
  double q_value(const VectorXd& s, const VectorXd& a) {
    MatrixXd sa(cfg_.obs_dim + cfg_.act_dim, 1);
    sa.topRows(cfg_.obs_dim) = s;
    sa.bottomRows(cfg_.act_dim) = a;
    return std::min(q1_.forward(sa)(0, 0), q2_.forward(sa)(0, 0));
  }

  // Instrumentation: targets used by the most recent update.
  const VectorXd& last_targets() const { return last_targets_; }

 private:
  struct Fresh {
    MatrixXd actions;
    VectorXd log_prob;
  };

  Fresh sample_actions(const MatrixXd& obs, Rng& rng) {
    auto s = actor_.sample(obs, rng);
    return {std::move(s.actions), std::move(s.log_prob)};
  }
  // Same, but leaves the head's caches primed for backward().
  Fresh sample_actions_cached(const MatrixXd& obs, Rng& rng) {
    return sample_actions(obs, rng);
  }

  VectorXd min_q(nn::Mlp& qa, nn::Mlp& qb, const MatrixXd& s, const MatrixXd& a) {
    MatrixXd sa(cfg_.obs_dim + cfg_.act_dim, s.cols());
    sa.topRows(cfg_.obs_dim) = s;
    sa.bottomRows(cfg_.act_dim) = a;
    VectorXd va = qa.forward(sa).row(0).transpose();
    VectorXd vb = qb.forward(sa).row(0).transpose();
    return va.cwiseMin(vb);
  }

  // Output-grad mask routing -1/B through whichever twin attains the minimum.
  static MatrixXd pick_mask(const VectorXd& q1v, const VectorXd& q2v, bool first, int B) {
    MatrixXd m(1, B);
    for (int j = 0; j < B; ++j) {
      bool q1_wins = q1v(j) <= q2v(j);
      m(0, j) = ((first && q1_wins) || (!first && !q1_wins)) ? 1.0 / B : 0.0;
    }
    return m;
  }

  static void polyak(nn::Mlp& target, const nn::Mlp& online, double tau) {
    for (std::size_t l = 0; l < target.weights().size(); ++l) {
      target.weights()[l] = (1.0 - tau) * target.weights()[l] + tau * online.weights()[l];
      target.biases()[l] = (1.0 - tau) * target.biases()[l] + tau * online.biases()[l];
    }
  }

  SacConfig cfg_;
  nn::GaussianHead actor_;
  nn::Mlp q1_, q2_, q1_tgt_, q2_tgt_;
  MatrixXd log_alpha_, log_alpha_grad_;
  std::optional<nn::Adam> actor_opt_, q1_opt_, q2_opt_, alpha_opt_;
  VectorXd last_targets_;
  long long n_updates_ = 0;
};

}  // namespace btadapt::sac
