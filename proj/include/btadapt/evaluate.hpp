#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "btadapt/hrl.hpp"

namespace btadapt::eval {

// Runs one frozen-policy episode for a context; the adapter hides which
// method (hierarchical, flat, episode-based, fixed parameters) is evaluated.
using EpisodeFn = std::function<hrl::EpisodeRecord(const env::Context&, Rng&)>;

struct EvalRow {
  env::Context context{};
  double mean_reward = 0.0;
  double std_reward = 0.0;  // over repeat episodes for this context
  int successes = 0;
  int collisions = 0;  // includes forbidden-zone entries
  int episodes = 0;
};

struct EvalReport {
  std::string policy_id;
  std::uint64_t context_seed = 0;
  std::vector<EvalRow> rows;
  double mean_reward = 0.0;  // across per-context means
  double std_reward = 0.0;
  int total_successes = 0;
  int total_collisions = 0;
  int total_episodes = 0;
};

inline EvalReport evaluate(const EpisodeFn& episode, const sampling::ContextSet& contexts,
                           int episodes_per_context, Rng& rng,
                           const std::string& policy_id = {}) {
  if (episodes_per_context < 1)
    throw std::invalid_argument("evaluate: episodes_per_context must be >= 1");
  EvalReport rep;
  rep.policy_id = policy_id;
  rep.context_seed = contexts.seed;
  std::vector<double> means;
  for (const auto& c : contexts.contexts) {
    EvalRow row;
    row.context = c;
    std::vector<double> rewards;
    for (int e = 0; e < episodes_per_context; ++e) {
      hrl::EpisodeRecord r = episode(c, rng);
      rewards.push_back(r.total_reward);
      row.successes += r.success ? 1 : 0;
      row.collisions += (r.collision || r.forbidden) ? 1 : 0;
      ++row.episodes;
    }
    auto ms = sampling::mean_std(rewards);
    row.mean_reward = ms.mean;
    row.std_reward = ms.std;
    rep.rows.push_back(row);
    means.push_back(row.mean_reward);
    rep.total_successes += row.successes;
    rep.total_collisions += row.collisions;
    rep.total_episodes += row.episodes;
  }
  auto agg = sampling::mean_std(means);
  rep.mean_reward = agg.mean;
  rep.std_reward = agg.std;
  return rep;
}

// Adapter for the hierarchical policy in deterministic mode.
inline EpisodeFn hierarchical_policy(env::Env& environment, bt::BehaviorTree& tree,
                                     sac::SacAgent& agent, sac::ReplayBuffer& buffer,
                                     const hrl::ObsCodec& codec) {
  return [&](const env::Context& c, Rng& rng) {
    return hrl::run_episode(environment, tree, agent, buffer, codec, c,
                            hrl::EpisodeMode::EvalDeterministic, rng);
  };
}

}  // namespace btadapt::eval
