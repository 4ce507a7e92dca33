#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "btadapt/gp.hpp"
#include "btadapt/sampling.hpp"

namespace btadapt::bo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double normal_pdf(double z) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Expected improvement over the incumbent for maximization.
inline double expected_improvement(double mean, double std, double best) {
  const double delta = mean - best;
  if (std <= 1e-12) return std::max(0.0, delta);
  const double z = delta / std;
  return delta * normal_cdf(z) + std * normal_pdf(z);
}

struct BoConfig {
  int budget = 100;       // total objective evaluations
  int init = 15;          // space-filling warm start (Latin hypercube)
  int multistart = 64;    // random EI seeds per suggestion
  int refine_sweeps = 30; // pattern-search sweeps on the best seed
  int refit_every = 5;    // hyperparameter refit cadence
};

struct BoTrace {
  std::vector<std::pair<int, double>> best_so_far;  // (evaluation #, best value)
  VectorXd best_theta;
  double best_value = 0.0;
};

inline VectorXd random_point(const std::vector<sampling::Interval>& bounds, Rng& rng) {
  VectorXd x(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t d = 0; d < bounds.size(); ++d)
    x(static_cast<Eigen::Index>(d)) = rng.uniform(bounds[d].lo, bounds[d].hi);
  return x;
}

// Maximizes expected improvement via random multi-start plus coordinate-wise
// pattern refinement of the best seed.
inline VectorXd suggest(const gp::Gp& surrogate,
                        const std::vector<sampling::Interval>& bounds, double incumbent,
                        Rng& rng, int multistart = 64, int refine_sweeps = 30) {
  if (surrogate.n_obs() == 0) return random_point(bounds, rng);
  auto ei = [&](const VectorXd& x) {
    auto p = surrogate.posterior(x);
    return expected_improvement(p.mean, p.std, incumbent);
  };

  VectorXd best = random_point(bounds, rng);
  double best_ei = ei(best);
  for (int s = 1; s < multistart; ++s) {
    VectorXd x = random_point(bounds, rng);
    double v = ei(x);
    if (v > best_ei) {
      best_ei = v;
      best = x;
    }
  }

  const Eigen::Index dim = best.size();
  std::vector<double> step(static_cast<std::size_t>(dim));
  for (Eigen::Index d = 0; d < dim; ++d)
    step[static_cast<std::size_t>(d)] = 0.25 * (bounds[d].hi - bounds[d].lo);
  for (int sweep = 0; sweep < refine_sweeps; ++sweep) {
    bool moved = false;
    for (Eigen::Index d = 0; d < dim; ++d) {
      for (double dir : {+1.0, -1.0}) {
        VectorXd trial = best;
        trial(d) = std::clamp(trial(d) + dir * step[static_cast<std::size_t>(d)],
                              bounds[d].lo, bounds[d].hi);
        double v = ei(trial);
        if (v > best_ei) {
          best_ei = v;
          best = trial;
          moved = true;
        }
      }
    }
    if (!moved)
      for (auto& s : step) s *= 0.5;
  }
  return best;
}

// Sequential model-based maximization of a black-box objective.
inline BoTrace optimize(const std::function<double(const VectorXd&)>& objective,
                        const std::vector<sampling::Interval>& bounds,
                        const BoConfig& cfg, Rng& rng) {
  if (cfg.budget < 1) throw std::invalid_argument("bo::optimize: budget must be >= 1");
  BoTrace trace;
  const Eigen::Index dim = static_cast<Eigen::Index>(bounds.size());
  MatrixXd X(dim, cfg.budget);
  VectorXd y(cfg.budget);
  int n = 0;

  auto record = [&](const VectorXd& x, double v) {
    X.col(n) = x;
    y(n) = v;
    ++n;
    if (trace.best_so_far.empty() || v > trace.best_value) {
      trace.best_value = v;
      trace.best_theta = x;
    }
    trace.best_so_far.emplace_back(n, trace.best_value);
  };

  const int n_init = std::min(std::max(cfg.init, 1), cfg.budget);
  auto init_pts = sampling::latin_hypercube(n_init, bounds, rng);
  for (const auto& p : init_pts) {
    VectorXd x(dim);
    for (Eigen::Index d = 0; d < dim; ++d) x(d) = p[static_cast<std::size_t>(d)];
    record(x, objective(x));
  }

  gp::Gp surrogate;
  gp::GpHyper hyper;
  while (n < cfg.budget) {
    if ((n - n_init) % std::max(cfg.refit_every, 1) == 0)
      hyper = gp::fit_hyperparams(X.leftCols(n), y.head(n), rng);
    surrogate.set_hyper(hyper);
    surrogate.fit(X.leftCols(n), y.head(n));
    VectorXd x = suggest(surrogate, bounds, trace.best_value, rng, cfg.multistart,
                         cfg.refine_sweeps);
    record(x, objective(x));
  }
  return trace;
}

}  // namespace btadapt::bo
