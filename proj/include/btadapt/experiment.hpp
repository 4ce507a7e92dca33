#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "btadapt/baselines.hpp"
#include "btadapt/checkpoint.hpp"
#include "btadapt/config.hpp"
#include "btadapt/evaluate.hpp"
#include "btadapt/io.hpp"
#include "btadapt/svg.hpp"

namespace btadapt::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

// Maps an experiment onto learner dimensions. The episode-based method takes
// (goals+1) gradient updates per pushed transition so each training episode
// receives as many updates as a step-based episode with its goals+1 motions.
inline hrl::TrainConfig to_train_config(const config::ExperimentConfig& c) {
  hrl::TrainConfig t;
  t.env_cfg = c.env;
  t.sac_cfg = c.sac;
  t.encoding = c.encoding;
  t.n_motions = c.goals;
  t.episodes = c.episodes;
  t.eval_period = c.eval_period;
  t.n_train_contexts = c.train_contexts;
  t.context_seed = c.train_context_seed;
  t.seed = c.seed;
  if (c.method == config::Method::BtEpisode)
    t.sac_cfg.updates_per_step = c.sac.updates_per_step * (c.goals + 1);
  return t;
}

struct RunResult {
  fs::path dir;
  sampling::LearningCurve curve;          // periodic deterministic evaluations
  sampling::LearningCurve episode_curve;  // per-training-episode returns
  std::optional<int> convergence_episode;
  bool diverged = false;
  long long env_steps = 0;
  double wall_seconds = 0.0;
  eval::EvalReport train_eval;
  eval::EvalReport val_eval;
};

namespace detail {

inline eval::EvalReport eval_agent(const config::ExperimentConfig& c, sac::SacAgent& agent,
                                   const sampling::ContextSet& contexts,
                                   const std::string& policy_id, Rng& rng,
                                   int episodes_per_context = 1) {
  env::Env environment(c.env);
  sac::ReplayBuffer scratch(agent.config().obs_dim, agent.config().act_dim,
                            static_cast<std::size_t>(agent.config().batch));
  eval::EpisodeFn fn;
  switch (c.method) {
    case config::Method::BtSac: {
      auto tree = std::make_shared<bt::BehaviorTree>(
          bt::BehaviorTree::chain(c.goals, {c.env.goal.x, c.env.goal.z}));
      hrl::ObsCodec codec{c.env, c.encoding, tree->n_actions()};
      fn = [&environment, &agent, &scratch, tree, codec](const env::Context& ctx, Rng& r) {
        return hrl::run_episode(environment, *tree, agent, scratch, codec, ctx,
                                hrl::EpisodeMode::EvalDeterministic, r);
      };
      break;
    }
    case config::Method::SacFlat: {
      int cap = c.flat_max_motions;
      fn = [&environment, &agent, &scratch, cap](const env::Context& ctx, Rng& r) {
        return baselines::flat_episode(environment, agent, scratch, ctx,
                                       hrl::EpisodeMode::EvalDeterministic, r, nullptr, cap);
      };
      break;
    }
    case config::Method::BtEpisode: {
      auto tree = std::make_shared<bt::BehaviorTree>(
          bt::BehaviorTree::chain(c.goals, {c.env.goal.x, c.env.goal.z}));
      fn = [&environment, &agent, &scratch, tree](const env::Context& ctx, Rng& r) {
        return baselines::episode_based_run(environment, *tree, agent, scratch, ctx,
                                            hrl::EpisodeMode::EvalDeterministic, r);
      };
      break;
    }
    case config::Method::BtBo:
      throw std::logic_error("eval_agent: bt-bo has no learner checkpoint");
  }
  return eval::evaluate(fn, contexts, episodes_per_context, rng, policy_id);
}

inline json eval_to_json(const eval::EvalReport& rep) {
  return json{{"mean_reward", rep.mean_reward},
              {"std_reward", rep.std_reward},
              {"successes", rep.total_successes},
              {"collisions", rep.total_collisions},
              {"episodes", rep.total_episodes}};
}

inline svg::Series curve_series(const sampling::LearningCurve& curve, std::string label,
                                std::string color) {
  svg::Series s;
  s.label = std::move(label);
  s.color = std::move(color);
  for (const auto& p : curve) {
    s.x.push_back(p.episode);
    s.y.push_back(p.mean_reward);
    s.dy.push_back(p.std_reward);
  }
  return s;
}

}  // namespace detail

// Trains (or optimizes) one configuration and writes the full artifact set:
// config, context CSVs, learning curve (CSV + SVG), evaluation reports,
// learner checkpoint, and a manifest from which everything is reproducible.
inline RunResult run_experiment(const config::ExperimentConfig& cfg_in,
                                const fs::path& output_root) {
  config::ExperimentConfig c = cfg_in;
  config::validate(c);
  RunResult res;
  res.dir = output_root /
            (c.output_dir.empty() ? config::default_run_name(c) : c.output_dir);
  fs::create_directories(res.dir);

  const std::string config_text = config::serialize(c);
  io::write_text_file(res.dir / "config.txt", config_text);

  auto train_set = sampling::sample_contexts(c.env, c.train_contexts, c.train_context_seed);
  auto val_set = sampling::sample_contexts(c.env, c.val_contexts, c.val_context_seed);
  io::write_text_file(res.dir / "train_contexts.csv", io::contexts_to_csv(train_set));
  io::write_text_file(res.dir / "val_contexts.csv", io::contexts_to_csv(val_set));

  json manifest;
  manifest["schema_version"] = 1;
  manifest["method"] = config::to_string(c.method);
  manifest["seed"] = c.seed;
  manifest["goals"] = c.goals;
  manifest["train_contexts"] = c.train_contexts;
  manifest["forbidden_zone"] = c.env.forbidden_zone;
  manifest["config"] = config_text;

  if (c.method == config::Method::BtBo) {
    auto t0 = std::chrono::steady_clock::now();
    env::Env environment(c.env);
    auto tree = bt::BehaviorTree::chain(c.goals, {c.env.goal.x, c.env.goal.z});
    bo::BoConfig bcfg{c.bo.budget, c.bo.init, c.bo.multistart, c.bo.refine_sweeps,
                      c.bo.refit_every};
    Rng rng(c.seed);
    auto bo_res = baselines::bt_bo_optimize(environment, tree, train_set.contexts, bcfg, rng,
                                            c.bo.shared);
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Optimization trace: best-so-far reward per evaluation, one row per
    // (context, iteration).
    std::ostringstream trace_csv;
    trace_csv << "context_index,evaluation,best_so_far\n";
    for (std::size_t k = 0; k < bo_res.traces.size(); ++k)
      for (const auto& [it, best] : bo_res.traces[k].best_so_far)
        trace_csv << k << ',' << it << ',' << io::format_double(best) << '\n';
    io::write_text_file(res.dir / "bo_trace.csv", trace_csv.str());

    std::ostringstream thetas;
    thetas << "h_o,w_o,x_o";
    for (int d = 0; d < tree.stacked_dim(); ++d) thetas << ",theta" << d;
    thetas << ",best_reward\n";
    std::vector<Eigen::VectorXd> best_thetas;
    for (std::size_t k = 0; k < bo_res.traces.size(); ++k) {
      const auto& ctx = bo_res.shared ? train_set.contexts.front() : train_set.contexts[k];
      thetas << io::format_double(ctx.h_o) << ',' << io::format_double(ctx.w_o) << ','
             << io::format_double(ctx.x_o);
      for (int d = 0; d < tree.stacked_dim(); ++d)
        thetas << ',' << io::format_double(bo_res.traces[k].best_theta(d));
      thetas << ',' << io::format_double(bo_res.traces[k].best_value) << '\n';
      best_thetas.push_back(bo_res.traces[k].best_theta);
    }
    io::write_text_file(res.dir / "thetas.csv", thetas.str());

    // Final evaluation replays each context's optimized parameters.
    eval::EpisodeFn fn = [&](const env::Context& ctx, Rng&) {
      std::size_t k = 0;
      if (!bo_res.shared)
        for (; k < train_set.contexts.size(); ++k) {
          const auto& tc = train_set.contexts[k];
          if (tc.h_o == ctx.h_o && tc.w_o == ctx.w_o && tc.x_o == ctx.x_o) break;
        }
      return baselines::run_tree_with_params(environment, tree, best_thetas[k % best_thetas.size()],
                                             ctx);
    };
    Rng eval_rng(c.seed + 1);
    res.train_eval = eval::evaluate(fn, train_set, 1, eval_rng, "bt-bo");
    io::write_text_file(res.dir / "eval_train.csv", io::eval_report_to_csv(res.train_eval));

    std::vector<svg::Series> series;
    svg::Series s;
    s.label = "bt-bo best-so-far";
    s.color = "#2ca02c";
    if (!bo_res.traces.empty()) {
      std::size_t iters = bo_res.traces.front().best_so_far.size();
      for (std::size_t i = 0; i < iters; ++i) {
        std::vector<double> vals;
        for (const auto& tr : bo_res.traces)
          if (i < tr.best_so_far.size()) vals.push_back(tr.best_so_far[i].second);
        auto ms = sampling::mean_std(vals);
        s.x.push_back(static_cast<double>(i + 1));
        s.y.push_back(ms.mean);
        s.dy.push_back(ms.std);
      }
    }
    series.push_back(std::move(s));
    io::write_text_file(res.dir / "curve.svg",
                        svg::learning_curve_plot("parameter optimization", series,
                                                 "objective evaluations", "best reward"));

    manifest["train_eval"] = detail::eval_to_json(res.train_eval);
    manifest["wall_seconds"] = res.wall_seconds;
    manifest["artifacts"] = {"config.txt", "train_contexts.csv", "val_contexts.csv",
                             "bo_trace.csv", "thetas.csv", "eval_train.csv", "curve.svg"};
    manifest["complete"] = true;
    io::write_text_file(res.dir / "manifest.json", manifest.dump(2) + "\n");
    return res;
  }

  hrl::TrainConfig tcfg = to_train_config(c);
  hrl::TrainResult tr;
  switch (c.method) {
    case config::Method::BtSac:
      tr = hrl::train_run(tcfg);
      break;
    case config::Method::SacFlat:
      tr = baselines::train_run_flat(tcfg, c.flat_max_motions);
      break;
    case config::Method::BtEpisode:
      tr = baselines::train_run_episode(tcfg);
      break;
    case config::Method::BtBo:
      break;  // handled above
  }

  res.curve = tr.curve;
  res.episode_curve = tr.episode_curve;
  res.convergence_episode = tr.convergence_episode;
  res.diverged = tr.diverged;
  res.env_steps = tr.env_steps;
  res.wall_seconds = tr.wall_seconds;

  io::write_text_file(res.dir / "curve.csv", io::curve_to_csv(tr.curve));
  io::write_text_file(res.dir / "episodes.csv", io::curve_to_csv(tr.episode_curve));
  ckpt::save_file((res.dir / "checkpoint.bin").string(), config_text, *tr.agent);

  Rng eval_rng(c.seed + 1);
  res.train_eval = detail::eval_agent(c, *tr.agent, train_set,
                                      config::to_string(c.method) + std::string("/train"),
                                      eval_rng);
  res.val_eval = detail::eval_agent(c, *tr.agent, val_set,
                                    config::to_string(c.method) + std::string("/val"),
                                    eval_rng);
  io::write_text_file(res.dir / "eval_train.csv", io::eval_report_to_csv(res.train_eval));
  io::write_text_file(res.dir / "eval_val.csv", io::eval_report_to_csv(res.val_eval));

  io::write_text_file(
      res.dir / "curve.svg",
      svg::learning_curve_plot(config::default_run_name(c),
                               {detail::curve_series(tr.curve, config::to_string(c.method),
                                                     "#1f77b4")}));

  manifest["convergence_episode"] =
      res.convergence_episode ? json(*res.convergence_episode) : json(nullptr);
  manifest["diverged"] = res.diverged;
  manifest["env_steps"] = res.env_steps;
  manifest["wall_seconds"] = res.wall_seconds;
  manifest["train_eval"] = detail::eval_to_json(res.train_eval);
  manifest["val_eval"] = detail::eval_to_json(res.val_eval);
  manifest["artifacts"] = {"config.txt",  "train_contexts.csv", "val_contexts.csv",
                           "curve.csv",   "episodes.csv",       "curve.svg",
                           "checkpoint.bin", "eval_train.csv",  "eval_val.csv"};
  manifest["complete"] = true;
  io::write_text_file(res.dir / "manifest.json", manifest.dump(2) + "\n");
  return res;
}

// Rebuilds the learner recorded in a checkpoint and evaluates it on a context
// set (the embedded validation set by default).
inline eval::EvalReport eval_checkpoint(const fs::path& checkpoint_path,
                                        std::optional<int> expect_goals = std::nullopt,
                                        std::optional<sampling::ContextSet> contexts = std::nullopt,
                                        int episodes_per_context = 1) {
  std::string config_text = ckpt::peek_config(checkpoint_path.string());
  config::ExperimentConfig c = config::parse(config_text);
  if (expect_goals && *expect_goals != c.goals)
    throw std::invalid_argument("eval: checkpoint was trained with goals=" +
                                std::to_string(c.goals) + ", requested goals=" +
                                std::to_string(*expect_goals));

  hrl::TrainConfig tcfg = to_train_config(c);
  int obs_dim = 0, act_dim = 0;
  switch (c.method) {
    case config::Method::BtSac: {
      auto tree = bt::BehaviorTree::chain(c.goals, {c.env.goal.x, c.env.goal.z});
      hrl::ObsCodec codec{c.env, c.encoding, tree.n_actions()};
      obs_dim = codec.obs_dim();
      act_dim = hrl::compute_p(tree.slot_dims());
      break;
    }
    case config::Method::SacFlat:
      obs_dim = 5;
      act_dim = 2;
      break;
    case config::Method::BtEpisode:
      obs_dim = 3;
      act_dim = 2 * c.goals;
      break;
    case config::Method::BtBo:
      throw std::invalid_argument("eval: bt-bo runs carry no learner checkpoint");
  }

  sac::SacConfig scfg = tcfg.sac_cfg;
  scfg.obs_dim = obs_dim;
  scfg.act_dim = act_dim;
  if (scfg.action_scale.size() == 0)
    scfg.action_scale = Eigen::VectorXd::Constant(act_dim, c.env.action_bound);
  Rng build_rng(0);
  sac::SacAgent agent(scfg, build_rng);
  ckpt::restore_file(checkpoint_path.string(), agent);

  sampling::ContextSet set =
      contexts ? *contexts : sampling::sample_contexts(c.env, c.val_contexts, c.val_context_seed);
  Rng rng(c.seed + 1);
  return detail::eval_agent(c, agent, set, config::to_string(c.method), rng,
                            episodes_per_context);
}

}  // namespace btadapt::experiment
