#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "btadapt/rng.hpp"

namespace btadapt::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Named view of one parameter tensor and its gradient accumulator, used by
// the optimizer and by checkpointing.
struct ParamRef {
  MatrixXd* value;
  MatrixXd* grad;
  std::string tag;
};

// Fully connected net, tanh hidden activations, linear output. Double
// precision throughout. Inputs are column vectors; a matrix input is a batch
// (one sample per column). forward() caches activations; backward() consumes
// the most recent cache.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> sizes, Rng& rng, std::string tag = "mlp")
      : sizes_(std::move(sizes)), tag_(std::move(tag)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs >= 2 layer sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      int in = sizes_[l], out = sizes_[l + 1];
      if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
      double bound = 1.0 / std::sqrt(static_cast<double>(in));
      MatrixXd w(out, in);
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) w(i, j) = rng.uniform(-bound, bound);
      MatrixXd b(out, 1);
      for (int i = 0; i < out; ++i) b(i, 0) = rng.uniform(-bound, bound);
      w_.push_back(std::move(w));
      b_.push_back(std::move(b));
      gw_.emplace_back(MatrixXd::Zero(out, in));
      gb_.emplace_back(MatrixXd::Zero(out, 1));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }

  MatrixXd forward(const MatrixXd& x) {
    if (x.rows() != in_dim()) throw std::invalid_argument(tag_ + ": input dim mismatch");
    acts_.assign(1, x);
    for (std::size_t l = 0; l < w_.size(); ++l) {
      MatrixXd z = w_[l] * acts_.back();
      z.colwise() += b_[l].col(0);
      if (l + 1 < w_.size()) z = z.array().tanh().matrix();
      acts_.push_back(std::move(z));
    }
    have_forward_ = true;
    return acts_.back();
  }

  // Backpropagates output_grad through the cached forward pass. Parameter
  // gradients accumulate into the grad buffers unless accumulate_params is
  // false (used when only the input gradient is wanted, e.g. dQ/da).
  MatrixXd backward(const MatrixXd& output_grad, bool accumulate_params = true) {
    if (!have_forward_) throw std::logic_error(tag_ + ": backward without forward");
    if (output_grad.rows() != out_dim() || output_grad.cols() != acts_.back().cols())
      throw std::invalid_argument(tag_ + ": output grad shape mismatch");
    MatrixXd g = output_grad;
    for (std::size_t l = w_.size(); l-- > 0;) {
      if (accumulate_params) {
        gw_[l] += g * acts_[l].transpose();
        gb_[l].col(0) += g.rowwise().sum();
      }
      g = w_[l].transpose() * g;
      if (l > 0) g.array() *= 1.0 - acts_[l].array().square();
    }
    return g;
  }

  void zero_grad() {
    for (auto& g : gw_) g.setZero();
    for (auto& g : gb_) g.setZero();
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      out.push_back({&w_[l], &gw_[l], tag_ + ".w" + std::to_string(l)});
      out.push_back({&b_[l], &gb_[l], tag_ + ".b" + std::to_string(l)});
    }
    return out;
  }

  std::vector<MatrixXd>& weights() { return w_; }
  std::vector<MatrixXd>& biases() { return b_; }
  const std::vector<MatrixXd>& weights() const { return w_; }
  const std::vector<MatrixXd>& biases() const { return b_; }

 private:
  std::vector<int> sizes_;
  std::string tag_;
  std::vector<MatrixXd> w_, b_, gw_, gb_;
  std::vector<MatrixXd> acts_;
  bool have_forward_ = false;
};

// Adaptive-moment optimizer over a fixed set of parameter tensors. Throws on
// non-finite gradients or parameters — training must never silently continue
// past a numerical blow-up.
class Adam {
 public:
  explicit Adam(std::vector<ParamRef> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
      v_.emplace_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void step() {
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, t_);
    double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const MatrixXd& g = *params_[i].grad;
      if (!g.allFinite())
        throw std::runtime_error("non-finite gradient in " + params_[i].tag);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.array().square().matrix();
      params_[i].value->array() -=
          lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
      if (!params_[i].value->allFinite())
        throw std::runtime_error("non-finite parameter in " + params_[i].tag);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->setZero();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long long steps_taken() const { return t_; }
  std::vector<MatrixXd>& moments_m() { return m_; }
  std::vector<MatrixXd>& moments_v() { return v_; }
  void set_steps_taken(long long t) { t_ = t; }

 private:
  std::vector<ParamRef> params_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<MatrixXd> m_, v_;
};

// Squashed-Gaussian policy head: a trunk net emits [mean; raw log-std] per
// action dimension; samples are tanh-squashed and scaled per-dimension, and
// log-probabilities carry the full change-of-variables correction.
class GaussianHead {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;
  static constexpr double kSquashEps = 1e-6;

  GaussianHead() = default;

  GaussianHead(int obs_dim, int act_dim, const std::vector<int>& hidden, VectorXd scale,
               Rng& rng, std::string tag = "actor")
      : act_dim_(act_dim), scale_(std::move(scale)) {
    if (scale_.size() != act_dim) throw std::invalid_argument("scale size != act dim");
    if ((scale_.array() <= 0).any()) throw std::invalid_argument("scale must be positive");
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * act_dim);
    trunk_ = Mlp(sizes, rng, std::move(tag));
  }

  struct Sample {
    MatrixXd actions;  // act_dim x batch
    VectorXd log_prob;
  };

  // Reparameterized batch sample with caller-supplied standard-normal noise;
  // caches everything backward() needs.
  Sample sample_with_noise(const MatrixXd& obs, const MatrixXd& noise) {
    MatrixXd out = trunk_.forward(obs);
    const auto B = obs.cols();
    if (noise.rows() != act_dim_ || noise.cols() != B)
      throw std::invalid_argument("noise shape mismatch");
    mu_ = out.topRows(act_dim_);
    lraw_ = out.bottomRows(act_dim_);
    MatrixXd lam = lraw_.array().min(kLogStdMax).max(kLogStdMin).matrix();
    sig_ = lam.array().exp().matrix();
    eps_ = noise;
    MatrixXd u = mu_ + sig_.cwiseProduct(eps_);
    t_ = u.array().tanh().matrix();
    cached_ = true;

    Sample s;
    s.actions = (t_.array().colwise() * scale_.array()).matrix();
    s.log_prob = VectorXd::Zero(B);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index b = 0; b < B; ++b) {
      double lp = 0.0;
      for (int d = 0; d < act_dim_; ++d) {
        lp += -lam(d, b) - 0.5 * eps_(d, b) * eps_(d, b) - half_log_2pi;
        lp -= std::log(1.0 - t_(d, b) * t_(d, b) + kSquashEps);
        lp -= std::log(scale_(d));
      }
      s.log_prob(b) = lp;
    }
    return s;
  }

  Sample sample(const MatrixXd& obs, Rng& rng) {
    MatrixXd noise(act_dim_, obs.cols());
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
      for (int i = 0; i < act_dim_; ++i) noise(i, j) = rng.normal();
    return sample_with_noise(obs, noise);
  }

  // Deterministic mode (scaled tanh of the mean) for evaluation rollouts.
  MatrixXd mode(const MatrixXd& obs) {
    MatrixXd out = trunk_.forward(obs);
    MatrixXd t = out.topRows(act_dim_).array().tanh().matrix();
    return (t.array().colwise() * scale_.array()).matrix();
  }

  // Routes upstream gradients w.r.t. actions and log-probs of the most
  // recent sample_with_noise() into the trunk parameters. Gradients:
  //   a = s * tanh(mu + exp(lam) * eps)
  //   dlogp/dmu  =  2 t (1 - t^2) / w,          w = 1 - t^2 + eps_guard
  //   dlogp/dlam = -1 + dlogp/dmu * sig * eps
  // with the lam path gated where the raw log-std sits outside the clamp.
  void backward(const MatrixXd& dA, const VectorXd& dlogp) {
    if (!cached_) throw std::logic_error("GaussianHead::backward without sample");
    const auto B = mu_.cols();
    if (dA.rows() != act_dim_ || dA.cols() != B || dlogp.size() != B)
      throw std::invalid_argument("GaussianHead::backward shape mismatch");

    Eigen::ArrayXXd t = t_.array();
    Eigen::ArrayXXd one_m_t2 = 1.0 - t.square();
    Eigen::ArrayXXd w = one_m_t2 + kSquashEps;
    Eigen::ArrayXXd da_du = dA.array().colwise() * scale_.array();  // then * (1-t^2)
    da_du *= one_m_t2;
    Eigen::ArrayXXd dlp_du = 2.0 * t * one_m_t2 / w;
    Eigen::ArrayXXd dlp_b = dlp_du.rowwise() * dlogp.transpose().array();

    MatrixXd dmu = (da_du + dlp_b).matrix();
    Eigen::ArrayXXd sig_eps = sig_.array() * eps_.array();
    Eigen::ArrayXXd dlam = (da_du + dlp_b) * sig_eps;
    dlam.rowwise() -= dlogp.transpose().array();
    Eigen::ArrayXXd gate =
        (lraw_.array() > kLogStdMin && lraw_.array() < kLogStdMax).cast<double>();
    dlam *= gate;

    MatrixXd g(2 * act_dim_, B);
    g.topRows(act_dim_) = dmu;
    g.bottomRows(act_dim_) = dlam.matrix();
    trunk_.backward(g);
  }

  // Log-density of a given action under the current policy at obs, via
  // inversion of the squash. Diagnostics only (not differentiable).
  double log_density(const VectorXd& obs, const VectorXd& action) {
    MatrixXd out = trunk_.forward(obs);
    double lp = 0.0;
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (int d = 0; d < act_dim_; ++d) {
      double mu = out(d, 0);
      double lam = std::clamp(out(act_dim_ + d, 0), kLogStdMin, kLogStdMax);
      double sig = std::exp(lam);
      double t = std::clamp(action(d) / scale_(d), -1.0 + 1e-12, 1.0 - 1e-12);
      double u = std::atanh(t);
      double e = (u - mu) / sig;
      lp += -lam - 0.5 * e * e - half_log_2pi;
      lp -= std::log(1.0 - t * t + kSquashEps);
      lp -= std::log(scale_(d));
    }
    return lp;
  }

  struct MeanStd {
    VectorXd mean, std;
  };
  MeanStd mean_std(const VectorXd& obs) {
    MatrixXd out = trunk_.forward(obs);
    MeanStd ms;
    ms.mean = out.topRows(act_dim_).col(0);
    ms.std = out.bottomRows(act_dim_)
                 .col(0)
                 .array()
                 .min(kLogStdMax)
                 .max(kLogStdMin)
                 .exp()
                 .matrix();
    return ms;
  }

  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }
  int act_dim() const { return act_dim_; }
  const VectorXd& scale() const { return scale_; }

 private:
  Mlp trunk_;
  int act_dim_ = 0;
  VectorXd scale_;
  MatrixXd mu_, lraw_, sig_, eps_, t_;
  bool cached_ = false;
};

}  // namespace btadapt::nn
