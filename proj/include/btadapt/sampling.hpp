#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "btadapt/env2d.hpp"
#include "btadapt/rng.hpp"

namespace btadapt::sampling {

struct Interval {
  double lo = 0.0, hi = 0.0;
};

// Latin hypercube: per dimension, the n samples occupy the n equal-width
// strata exactly once, uniformly jittered inside their stratum.
inline std::vector<std::vector<double>> latin_hypercube(int n,
                                                        const std::vector<Interval>& ranges,
                                                        Rng& rng) {
  if (n < 1) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  for (const auto& r : ranges)
    if (!(r.hi > r.lo)) throw std::invalid_argument("latin_hypercube: empty range");

  const int dims = static_cast<int>(ranges.size());
  std::vector<std::vector<double>> out(n, std::vector<double>(dims));
  std::vector<int> strata(n);
  for (int d = 0; d < dims; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    rng.shuffle(strata);
    double width = (ranges[d].hi - ranges[d].lo) / n;
    for (int i = 0; i < n; ++i)
      out[i][d] = ranges[d].lo + (strata[i] + rng.uniform(0.0, 1.0)) * width;
  }
  return out;
}

struct ContextSet {
  std::vector<env::Context> contexts;
  std::uint64_t seed = 0;
};

inline ContextSet sample_contexts(const env::EnvConfig& cfg, int n, std::uint64_t seed) {
  Rng rng(seed);
  auto raw = latin_hypercube(n,
                             {{cfg.h_o_min, cfg.h_o_max},
                              {cfg.w_o_min, cfg.w_o_max},
                              {cfg.x_o_min, cfg.x_o_max}},
                             rng);
  ContextSet set;
  set.seed = seed;
  for (const auto& row : raw) {
    env::Context c{row[0], row[1], row[2]};
    if (!env::context_valid(cfg, c))
      throw std::logic_error("sampled context violates placement constraints");
    set.contexts.push_back(c);
  }
  return set;
}

// One periodic-evaluation snapshot during training.
struct CurvePoint {
  int episode = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  // Identical samples have exactly zero variance; skip the arithmetic that
  // would leave rounding residue.
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) {
    ms.mean = xs.front();
    return ms;
  }
  ms.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() < 2) return ms;
  double ss = 0.0;
  for (double x : xs) ss += (x - ms.mean) * (x - ms.mean);
  ms.std = std::sqrt(ss / (xs.size() - 1));
  return ms;
}

// Earliest episode E from which the curve has stopped moving: the trailing
// `window`-episode mean differs from the preceding window's mean by less than
// `threshold` of the curve's overall reward range, and from E onward the
// trailing mean stays within that tolerance of its final level. The second
// condition is what makes the rule retrospective — transient flat stretches
// (the pre-update warmup phase, dips mid-climb) are not plateaus because the
// curve moves again afterwards. Range-normalization keeps the threshold
// meaningful for curves that plateau near zero reward. A detection is only
// valid with at least one full window of confirming data after it; a curve
// still moving when recording stops therefore reports no convergence instead
// of trivially "stabilizing" at the cutoff. The curve is recorded at
// evaluation granularity and is linearly interpolated to per-episode
// resolution first.
inline std::optional<int> detect_convergence(const LearningCurve& curve, int window = 150,
                                             double threshold = 0.02) {
  if (curve.size() < 2) return std::nullopt;
  const int first = curve.front().episode;
  const int last = curve.back().episode;
  if (last - first < 3 * window) return std::nullopt;

  // Per-episode resample.
  std::vector<double> v(static_cast<std::size_t>(last - first) + 1);
  std::size_t seg = 0;
  for (int e = first; e <= last; ++e) {
    while (seg + 2 < curve.size() && curve[seg + 1].episode <= e) ++seg;
    const auto& a = curve[seg];
    const auto& b = curve[seg + 1];
    double t = b.episode == a.episode
                   ? 0.0
                   : static_cast<double>(e - a.episode) / (b.episode - a.episode);
    t = std::min(1.0, std::max(0.0, t));
    v[e - first] = a.mean_reward + t * (b.mean_reward - a.mean_reward);
  }

  std::vector<double> prefix(v.size() + 1, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) prefix[i + 1] = prefix[i] + v[i];
  auto window_mean = [&](int lo_ep, int hi_ep) {  // inclusive episode bounds
    return (prefix[hi_ep - first + 1] - prefix[lo_ep - first]) / (hi_ep - lo_ep + 1);
  };

  const double span = *std::max_element(v.begin(), v.end()) -
                      *std::min_element(v.begin(), v.end());
  const double tol = threshold * std::max(span, 1e-12);

  const double m1_last = window_mean(last - window + 1, last);
  std::vector<char> stable(static_cast<std::size_t>(last - first) + 1, 0);
  bool suffix_ok = true;
  for (int E = last; E >= first + 2 * window; --E) {
    suffix_ok = suffix_ok && std::abs(window_mean(E - window + 1, E) - m1_last) < tol;
    stable[E - first] = suffix_ok;
  }

  for (int E = first + 2 * window; E <= last - window; ++E) {
    double m0 = window_mean(E - 2 * window + 1, E - window);
    double m1 = window_mean(E - window + 1, E);
    if (std::abs(m1 - m0) < tol && stable[E - first]) return E;
  }
  return std::nullopt;
}

}  // namespace btadapt::sampling
