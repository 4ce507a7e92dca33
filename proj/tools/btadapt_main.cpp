#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "btadapt/sweep.hpp"

namespace {

using namespace btadapt;
namespace fs = std::filesystem;

fs::path output_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("BTADAPT_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

// Assembles a config in override order: built-in defaults, then the config
// file, then --set pairs, then dedicated flags.
struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string method, encoding, output;
  int contexts = -1, goals = -1, seed = std::numeric_limits<int>::min();
  int episodes = -1, eval_period = -1;
  bool forbidden = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config file (key=value sections)");
    cmd->add_option("--set", sets, "override, e.g. --set sac.lr=0.001")
        ->expected(-1)
        ->allow_extra_args(false);
    cmd->add_option("--method", method, "bt-sac | sac-flat | bt-episode | bt-bo");
    cmd->add_option("--contexts", contexts, "training context count");
    cmd->add_option("--goals", goals, "intermediate motion count");
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--episodes", episodes, "training episodes");
    cmd->add_option("--eval-period", eval_period, "episodes between evaluations");
    cmd->add_option("--encoding", encoding, "index encoding: scalar | one-hot");
    cmd->add_option("--output", output, "run directory name under the output root");
    cmd->add_flag("--forbidden", forbidden, "enable the forbidden-zone variant");
  }

  config::ExperimentConfig build() const {
    config::ExperimentConfig c;
    if (!config_file.empty()) c = config::parse(io::read_text_file(config_file), c);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects section.key=value, got '" + s + "'");
      pairs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!method.empty()) pairs.emplace_back("experiment.method", method);
    if (contexts >= 0) pairs.emplace_back("contexts.train_n", std::to_string(contexts));
    if (goals >= 0) pairs.emplace_back("tree.goals", std::to_string(goals));
    if (seed != std::numeric_limits<int>::min())
      pairs.emplace_back("experiment.seed", std::to_string(seed));
    if (episodes >= 0) pairs.emplace_back("train.episodes", std::to_string(episodes));
    if (eval_period >= 0) pairs.emplace_back("train.eval_period", std::to_string(eval_period));
    if (!encoding.empty()) pairs.emplace_back("tree.encoding", encoding);
    if (!output.empty()) pairs.emplace_back("experiment.output", output);
    if (forbidden) pairs.emplace_back("env.forbidden_zone", "true");
    return config::from_pairs(pairs, c);
  }
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

int cmd_train(const ConfigArgs& args, const std::string& root_flag) {
  config::ExperimentConfig c = args.build();
  auto res = experiment::run_experiment(c, output_root(root_flag));
  std::cout << "run " << res.dir.string() << "\n";
  if (res.convergence_episode)
    std::cout << "converged at episode " << *res.convergence_episode << "\n";
  else
    std::cout << "no convergence within " << c.episodes << " episodes\n";
  if (c.method != config::Method::BtBo)
    std::cout << "validation mean reward " << res.val_eval.mean_reward << " ("
              << res.val_eval.total_successes << "/" << res.val_eval.total_episodes
              << " successes, " << res.val_eval.total_collisions << " collisions)\n";
  else
    std::cout << "train-set mean reward " << res.train_eval.mean_reward << " ("
              << res.train_eval.total_successes << "/" << res.train_eval.total_episodes
              << " successes)\n";
  if (res.diverged) {
    std::cout << "training diverged; artifacts cover the completed prefix\n";
    return 2;
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, int goals, int contexts, int context_seed,
             int repeats, const std::string& out_file) {
  std::optional<int> expect_goals;
  if (goals >= 0) expect_goals = goals;
  std::optional<sampling::ContextSet> set;
  if (contexts > 0) {
    std::string cfg_text = ckpt::peek_config(checkpoint);
    config::ExperimentConfig c = config::parse(cfg_text);
    set = sampling::sample_contexts(c.env, contexts,
                                    context_seed >= 0 ? context_seed : c.val_context_seed);
  }
  auto rep = experiment::eval_checkpoint(checkpoint, expect_goals, set, repeats);
  std::string csv = io::eval_report_to_csv(rep);
  if (!out_file.empty()) io::write_text_file(out_file, csv);
  std::cout << "policy " << rep.policy_id << ": mean reward " << rep.mean_reward << " +/- "
            << rep.std_reward << ", successes " << rep.total_successes << "/"
            << rep.total_episodes << ", collisions " << rep.total_collisions << "\n";
  if (out_file.empty()) std::cout << csv;
  return 0;
}

sweep::SweepSpec build_sweep_spec(const ConfigArgs& args, const std::string& methods,
                                  const std::string& contexts, const std::string& seeds,
                                  const std::string& goals, int workers) {
  sweep::SweepSpec spec;
  spec.base = args.build();
  if (!methods.empty()) {
    std::stringstream ss(methods);
    std::string tok;
    while (std::getline(ss, tok, ',')) spec.methods.push_back(config::method_from_string(tok));
  }
  if (!contexts.empty()) spec.context_counts = parse_int_list(contexts);
  if (!seeds.empty()) spec.seeds = parse_int_list(seeds);
  if (!goals.empty()) spec.goal_counts = parse_int_list(goals);
  spec.workers = workers;
  for (const auto& cell : sweep::expand(spec)) config::validate(cell);
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-conditioned behavior-tree policy adaptation"};
  app.require_subcommand(1);
  std::string root_flag;
  app.add_option("--output-root", root_flag,
                 "artifact root (default: $BTADAPT_OUTPUT_ROOT or ./runs)");

  auto* train = app.add_subcommand("train", "train one configuration");
  ConfigArgs train_args;
  train_args.attach(train);

  auto* evalc = app.add_subcommand("eval", "evaluate a saved checkpoint");
  std::string checkpoint, eval_out;
  int eval_goals = -1, eval_contexts = -1, eval_context_seed = -1, eval_repeats = 1;
  evalc->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evalc->add_option("--goals", eval_goals, "expected motion count (refuses on mismatch)");
  evalc->add_option("--contexts", eval_contexts, "evaluate on a fresh context set of this size");
  evalc->add_option("--context-seed", eval_context_seed, "seed for the fresh context set");
  evalc->add_option("--repeats", eval_repeats, "episodes per context");
  evalc->add_option("--out", eval_out, "write the report CSV here");

  auto* sweepc = app.add_subcommand("sweep", "run a grid of training cells (resumable)");
  ConfigArgs sweep_args;
  sweep_args.attach(sweepc);
  std::string sw_methods, sw_contexts, sw_seeds, sw_goals, sw_dir = "sweep";
  int sw_workers = 1;
  sweepc->add_option("--methods", sw_methods, "comma list, e.g. bt-sac,sac-flat");
  sweepc->add_option("--context-grid", sw_contexts, "comma list of context counts");
  sweepc->add_option("--seeds", sw_seeds, "comma list of seeds");
  sweepc->add_option("--goal-grid", sw_goals, "comma list of motion counts");
  sweepc->add_option("--dir", sw_dir, "sweep directory name under the output root");
  sweepc->add_option("--workers", sw_workers, "parallel cells");

  auto* report = app.add_subcommand("report", "re-aggregate an existing sweep directory");
  ConfigArgs report_args;
  report_args.attach(report);
  std::string rp_methods, rp_contexts, rp_seeds, rp_goals, rp_dir = "sweep";
  report->add_option("--methods", rp_methods, "comma list, e.g. bt-sac,sac-flat");
  report->add_option("--context-grid", rp_contexts, "comma list of context counts");
  report->add_option("--seeds", rp_seeds, "comma list of seeds");
  report->add_option("--goal-grid", rp_goals, "comma list of motion counts");
  report->add_option("--dir", rp_dir, "sweep directory name under the output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, root_flag);
    if (evalc->parsed())
      return cmd_eval(checkpoint, eval_goals, eval_contexts, eval_context_seed, eval_repeats,
                      eval_out);
    if (sweepc->parsed()) {
      auto spec = build_sweep_spec(sweep_args, sw_methods, sw_contexts, sw_seeds, sw_goals,
                                   sw_workers);
      fs::path dir = output_root(root_flag) / fs::path(sw_dir);
      auto outcomes = sweep::run_sweep(spec, dir);
      int ran = 0, skipped = 0, failed = 0;
      for (const auto& out : outcomes) {
        switch (out.status) {
          case sweep::CellOutcome::Status::Ran: ++ran; break;
          case sweep::CellOutcome::Status::Skipped: ++skipped; break;
          case sweep::CellOutcome::Status::Failed:
            ++failed;
            std::cerr << "cell " << out.name << " failed: " << out.error << "\n";
            break;
        }
      }
      std::cout << "sweep " << dir.string() << ": " << ran << " ran, " << skipped
                << " skipped, " << failed << " failed (of " << outcomes.size() << ")\n";
      return failed == 0 ? 0 : 2;
    }
    if (report->parsed()) {
      auto spec = build_sweep_spec(report_args, rp_methods, rp_contexts, rp_seeds, rp_goals, 1);
      fs::path dir = output_root(root_flag) / fs::path(rp_dir);
      if (!fs::exists(dir))
        throw std::invalid_argument("report: no sweep directory at " + dir.string());
      auto csv = sweep::write_report(spec, dir);
      std::cout << "report " << csv.string() << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
