#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "btadapt/rng.hpp"

namespace btadapt::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GpHyper {
  double length_scale = 0.2;
  double signal_var = 1.0;
  double noise_var = 1e-4;
};

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

// Exact GP regression with a squared-exponential kernel on a zero-mean prior.
// Targets are centered internally so the prior mean tracks the data mean.
class Gp {
 public:
  explicit Gp(GpHyper hyper = {}) : hyper_(hyper) {}

  static double kernel(const GpHyper& h, const VectorXd& a, const VectorXd& b) {
    return h.signal_var * std::exp(-(a - b).squaredNorm() / (2.0 * h.length_scale * h.length_scale));
  }

  // X holds one observation per column.
  void fit(MatrixXd X, VectorXd y) {
    if (X.cols() != y.size() || y.size() == 0)
      throw std::invalid_argument("Gp::fit: shape mismatch or empty data");
    X_ = std::move(X);
    y_mean_ = y.mean();
    y_ = y.array() - y_mean_;
    factorize();
  }

  void set_hyper(const GpHyper& h) {
    hyper_ = h;
    if (X_.cols() > 0) factorize();
  }
  const GpHyper& hyper() const { return hyper_; }
  Eigen::Index n_obs() const { return X_.cols(); }

  Posterior posterior(const VectorXd& x) const {
    if (X_.cols() == 0) throw std::logic_error("Gp::posterior: no observations");
    VectorXd ks(X_.cols());
    for (Eigen::Index i = 0; i < X_.cols(); ++i) ks(i) = kernel(hyper_, x, X_.col(i));
    Posterior p;
    p.mean = y_mean_ + ks.dot(alpha_);
    VectorXd v = llt_.matrixL().solve(ks);
    double var = hyper_.signal_var - v.squaredNorm();
    p.std = std::sqrt(std::max(0.0, var));
    return p;
  }

  // Log marginal likelihood of the centered targets under current
  // hyperparameters.
  double log_marginal_likelihood() const {
    if (X_.cols() == 0) throw std::logic_error("Gp::log_marginal_likelihood: no observations");
    double logdet = 0.0;
    const auto& L = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += std::log(L(i, i));
    return -0.5 * y_.dot(alpha_) - logdet -
           0.5 * y_.size() * std::log(2.0 * std::acos(-1.0));
  }

 private:
  void factorize() {
    const Eigen::Index n = X_.cols();
    MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        K(i, j) = K(j, i) = kernel(hyper_, X_.col(i), X_.col(j));
    // Escalate the diagonal jitter until the Cholesky succeeds.
    for (double jitter = 0.0; jitter <= 1.1e-4; jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0) {
      MatrixXd Kn = K;
      Kn.diagonal().array() += hyper_.noise_var + jitter;
      llt_.compute(Kn);
      if (llt_.info() == Eigen::Success) {
        alpha_ = llt_.solve(y_);
        return;
      }
    }
    throw std::runtime_error("Gp::fit: kernel matrix is not positive definite");
  }

  GpHyper hyper_;
  MatrixXd X_;
  VectorXd y_;
  double y_mean_ = 0.0;
  Eigen::LLT<MatrixXd> llt_;
  VectorXd alpha_;
};

// Hyperparameter selection by multi-start coordinate search over the log of
// each hyperparameter; gradient-free, adequate for the evaluation budgets
// used here.
inline GpHyper fit_hyperparams(const MatrixXd& X, const VectorXd& y, Rng& rng,
                               int n_starts = 4, int sweeps = 3) {
  auto score = [&](const GpHyper& h) -> double {
    Gp g(h);
    try {
      g.fit(X, y);
      return g.log_marginal_likelihood();
    } catch (const std::runtime_error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  double spread = 1.0;
  if (X.cols() > 1) {
    double lo = X.minCoeff(), hi = X.maxCoeff();
    spread = std::max(hi - lo, 1e-3);
  }
  double y_var = 1.0;
  if (y.size() > 1) {
    double m = y.mean();
    y_var = std::max((y.array() - m).square().sum() / (y.size() - 1), 1e-6);
  }

  GpHyper best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_starts; ++s) {
    GpHyper h;
    h.length_scale = spread * std::exp(rng.uniform(std::log(0.05), std::log(1.0)));
    h.signal_var = y_var * std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
    h.noise_var = y_var * std::exp(rng.uniform(std::log(1e-6), std::log(1e-2)));
    double sc = score(h);

    // Coordinate descent in log-space with a shrinking step.
    double step = std::log(2.0);
    for (int sweep = 0; sweep < sweeps; ++sweep, step *= 0.5) {
      for (int dim = 0; dim < 3; ++dim) {
        auto get = [&](GpHyper& g) -> double& {
          return dim == 0 ? g.length_scale : dim == 1 ? g.signal_var : g.noise_var;
        };
        for (double dir : {+1.0, -1.0}) {
          GpHyper trial = h;
          get(trial) = get(trial) * std::exp(dir * step);
          double tsc = score(trial);
          while (tsc > sc) {
            h = trial;
            sc = tsc;
            get(trial) = get(trial) * std::exp(dir * step);
            tsc = score(trial);
          }
        }
      }
    }
    if (sc > best_score) {
      best_score = sc;
      best = h;
    }
  }
  return best;
}

}  // namespace btadapt::gp
