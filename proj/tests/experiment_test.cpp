#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "btadapt/sweep.hpp"

using namespace btadapt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Smallest configuration that still exercises the full pipeline: two motions,
// a 16x16 policy, a handful of episodes with updates actually firing.
config::ExperimentConfig tiny_config(config::Method m) {
  config::ExperimentConfig c;
  c.method = m;
  c.seed = 5;
  c.goals = 2;
  c.train_contexts = 2;
  c.train_context_seed = 61;
  c.val_contexts = 2;
  c.val_context_seed = 62;
  c.sac.hidden = {16, 16};
  c.sac.batch = 8;
  c.sac.buffer_capacity = 512;
  c.sac.warmup_steps = 6;
  c.episodes = 6;
  c.eval_period = 3;
  c.bo.budget = 6;
  c.bo.init = 3;
  c.bo.multistart = 8;
  c.bo.refine_sweeps = 4;
  return c;
}

struct TempRoot {
  fs::path dir;
  explicit TempRoot(const std::string& tag) {
    dir = fs::temp_directory_path() / ("btadapt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TempRoot() { fs::remove_all(dir); }
};

json read_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  EXPECT_TRUE(in.good());
  return json::parse(in);
}

}  // namespace

TEST(Experiment, WritesFullArtifactSetWithManifest) {
  TempRoot root("artifacts");
  auto res = experiment::run_experiment(tiny_config(config::Method::BtSac), root.dir);
  for (const char* f : {"config.txt", "train_contexts.csv", "val_contexts.csv", "curve.csv",
                        "episodes.csv", "curve.svg", "checkpoint.bin", "eval_train.csv",
                        "eval_val.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(res.dir / f)) << f;

  json m = read_manifest(res.dir);
  EXPECT_TRUE(m["complete"].get<bool>());
  EXPECT_EQ(m["method"], "bt-sac");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_FALSE(m["diverged"].get<bool>());
  EXPECT_GT(m["env_steps"].get<long long>(), 0);
  // the embedded config reproduces the run directory's config file
  EXPECT_EQ(m["config"].get<std::string>(), io::read_text_file(res.dir / "config.txt"));

  // curve.csv round-trips to the in-memory curve: eval at 0, 3, 6
  auto curve = io::curve_from_csv(io::read_text_file(res.dir / "curve.csv"));
  ASSERT_EQ(curve.size(), res.curve.size());
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve.front().episode, 0);
  EXPECT_EQ(curve.back().episode, 6);

  // episodes.csv holds one row per training episode
  auto eps = io::curve_from_csv(io::read_text_file(res.dir / "episodes.csv"));
  ASSERT_EQ(eps.size(), 6u);
  EXPECT_EQ(eps.front().episode, 1);
  EXPECT_EQ(eps.back().episode, 6);
}

TEST(Experiment, RerunFromSameConfigIsByteIdentical) {
  TempRoot root_a("rerun_a");
  TempRoot root_b("rerun_b");
  auto cfg = tiny_config(config::Method::BtSac);
  auto ra = experiment::run_experiment(cfg, root_a.dir);
  auto rb = experiment::run_experiment(cfg, root_b.dir);
  for (const char* f : {"config.txt", "train_contexts.csv", "val_contexts.csv", "curve.csv",
                        "episodes.csv", "eval_train.csv", "eval_val.csv", "curve.svg"})
    EXPECT_EQ(io::read_text_file(ra.dir / f), io::read_text_file(rb.dir / f)) << f;
  EXPECT_EQ(io::read_text_file(ra.dir / "checkpoint.bin"),
            io::read_text_file(rb.dir / "checkpoint.bin"));
}

TEST(Experiment, CheckpointEvalMatchesFinalCurveRowExactly) {
  TempRoot root("evalmatch");
  auto cfg = tiny_config(config::Method::BtSac);
  auto res = experiment::run_experiment(cfg, root.dir);
  // deterministic env + deterministic eval policy: the post-training eval on
  // the training contexts must equal the last periodic eval row exactly
  EXPECT_EQ(res.train_eval.mean_reward, res.curve.back().mean_reward);

  auto train_set = sampling::sample_contexts(cfg.env, cfg.train_contexts, cfg.train_context_seed);
  auto rep = experiment::eval_checkpoint(res.dir / "checkpoint.bin", std::nullopt, train_set);
  EXPECT_EQ(rep.mean_reward, res.curve.back().mean_reward);
  EXPECT_EQ(rep.total_episodes, cfg.train_contexts);
}

TEST(Experiment, CheckpointEvalRefusesMismatchedGoals) {
  TempRoot root("evalmismatch");
  auto res = experiment::run_experiment(tiny_config(config::Method::BtSac), root.dir);
  EXPECT_THROW(experiment::eval_checkpoint(res.dir / "checkpoint.bin", 4), std::invalid_argument);
  EXPECT_NO_THROW(experiment::eval_checkpoint(res.dir / "checkpoint.bin", 2));
}

TEST(Experiment, FlatAndEpisodeMethodsProduceTheSameArtifactShape) {
  TempRoot root("methods");
  for (auto m : {config::Method::SacFlat, config::Method::BtEpisode}) {
    auto cfg = tiny_config(m);
    cfg.flat_max_motions = 32;
    auto res = experiment::run_experiment(cfg, root.dir);
    EXPECT_EQ(res.curve.size(), 3u) << config::to_string(m);
    EXPECT_TRUE(fs::exists(res.dir / "checkpoint.bin"));
    json man = read_manifest(res.dir);
    EXPECT_EQ(man["method"], config::to_string(m));
    EXPECT_TRUE(man["complete"].get<bool>());
  }
}

TEST(Experiment, BtBoRunWritesTraceAndParameterTable) {
  TempRoot root("btbo");
  auto cfg = tiny_config(config::Method::BtBo);
  auto res = experiment::run_experiment(cfg, root.dir);
  EXPECT_TRUE(fs::exists(res.dir / "bo_trace.csv"));
  EXPECT_TRUE(fs::exists(res.dir / "thetas.csv"));
  EXPECT_FALSE(fs::exists(res.dir / "checkpoint.bin"));
  json m = read_manifest(res.dir);
  EXPECT_TRUE(m["complete"].get<bool>());
  EXPECT_TRUE(m.contains("train_eval"));

  // one optimized parameter row per training context, stacked dimension 2n
  std::string thetas = io::read_text_file(res.dir / "thetas.csv");
  EXPECT_NE(thetas.find("theta3"), std::string::npos);   // 2 goals -> theta0..theta3
  EXPECT_EQ(thetas.find("theta4"), std::string::npos);
  int rows = 0;
  for (char ch : thetas)
    if (ch == '\n') ++rows;
  EXPECT_EQ(rows, 1 + cfg.train_contexts);

  // trace rows: budget evaluations per context
  std::string trace = io::read_text_file(res.dir / "bo_trace.csv");
  int trows = -1;  // discount header
  for (char ch : trace)
    if (ch == '\n') ++trows;
  EXPECT_EQ(trows, cfg.bo.budget * cfg.train_contexts);
}

TEST(Sweep, GridExpansionMatchesTheCombinatorics) {
  sweep::SweepSpec spec;
  spec.base = tiny_config(config::Method::BtSac);
  spec.methods = {config::Method::BtSac, config::Method::SacFlat};
  spec.context_counts = {1, 5, 10, 20, 30};
  spec.seeds = {1, 2, 3};
  auto cells = sweep::expand(spec);
  EXPECT_EQ(cells.size(), 30u);
  // all names unique
  std::set<std::string> names;
  for (const auto& c : cells) names.insert(config::default_run_name(c));
  EXPECT_EQ(names.size(), cells.size());
}

TEST(Sweep, ResumeSkipsCompletedCellsAndReportAggregates) {
  TempRoot root("sweep");
  sweep::SweepSpec spec;
  spec.base = tiny_config(config::Method::BtSac);
  spec.base.episodes = 3;
  spec.base.eval_period = 3;
  spec.seeds = {5, 6};

  auto first = sweep::run_sweep(spec, root.dir);
  ASSERT_EQ(first.size(), 2u);
  for (const auto& out : first) EXPECT_EQ(out.status, sweep::CellOutcome::Status::Ran);

  auto second = sweep::run_sweep(spec, root.dir);
  for (const auto& out : second) EXPECT_EQ(out.status, sweep::CellOutcome::Status::Skipped);

  std::string summary = io::read_text_file(root.dir / "sweep_summary.csv");
  EXPECT_NE(summary.find("bt-sac-g2-c2-s5,bt-sac,2,2,5,complete"), std::string::npos);
  EXPECT_NE(summary.find("bt-sac-g2-c2-s6,bt-sac,2,2,6,complete"), std::string::npos);
  EXPECT_TRUE(fs::exists(root.dir / "sweep_curves.svg"));
  // band aggregated across the two seeds shows up as one labeled series
  std::string plot = io::read_text_file(root.dir / "sweep_curves.svg");
  EXPECT_NE(plot.find("bt-sac g2 c2"), std::string::npos);
}

TEST(Sweep, FailedCellIsRecordedAndOthersContinue) {
  TempRoot root("sweepfail");
  sweep::SweepSpec spec;
  spec.base = tiny_config(config::Method::BtSac);
  spec.base.episodes = 3;
  spec.base.eval_period = 3;
  spec.goal_counts = {0, 2};  // goals=0 fails validation inside the cell

  auto outcomes = sweep::run_sweep(spec, root.dir);
  ASSERT_EQ(outcomes.size(), 2u);
  EXPECT_EQ(outcomes[0].status, sweep::CellOutcome::Status::Failed);
  EXPECT_FALSE(outcomes[0].error.empty());
  EXPECT_EQ(outcomes[1].status, sweep::CellOutcome::Status::Ran);

  std::string failures = io::read_text_file(root.dir / "sweep_failures.txt");
  EXPECT_NE(failures.find(outcomes[0].name), std::string::npos);
  std::string summary = io::read_text_file(root.dir / "sweep_summary.csv");
  EXPECT_NE(summary.find(outcomes[0].name + ",bt-sac,0,2,5,missing"), std::string::npos);
}
