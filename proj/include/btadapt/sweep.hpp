#pragma once

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "btadapt/experiment.hpp"

namespace btadapt::sweep {

namespace fs = std::filesystem;
using nlohmann::json;

struct SweepSpec {
  config::ExperimentConfig base;
  std::vector<config::Method> methods;
  std::vector<int> context_counts;  // empty -> {base.train_contexts}
  std::vector<int> seeds;           // empty -> {base.seed}
  std::vector<int> goal_counts;     // empty -> {base.goals}
  int workers = 1;
};

struct CellOutcome {
  config::ExperimentConfig cfg;
  std::string name;
  enum class Status { Ran, Skipped, Failed } status = Status::Failed;
  std::string error;
};

inline std::vector<config::ExperimentConfig> expand(const SweepSpec& spec) {
  std::vector<config::Method> methods =
      spec.methods.empty() ? std::vector<config::Method>{spec.base.method} : spec.methods;
  std::vector<int> contexts = spec.context_counts.empty()
                                  ? std::vector<int>{spec.base.train_contexts}
                                  : spec.context_counts;
  std::vector<int> seeds = spec.seeds.empty()
                               ? std::vector<int>{static_cast<int>(spec.base.seed)}
                               : spec.seeds;
  std::vector<int> goals =
      spec.goal_counts.empty() ? std::vector<int>{spec.base.goals} : spec.goal_counts;

  std::vector<config::ExperimentConfig> cells;
  for (auto m : methods)
    for (int g : goals)
      for (int n : contexts)
        for (int s : seeds) {
          config::ExperimentConfig c = spec.base;
          c.method = m;
          c.goals = g;
          c.train_contexts = n;
          c.seed = s;
          c.output_dir.clear();  // cells always use the canonical name
          cells.push_back(std::move(c));
        }
  return cells;
}

inline bool cell_complete(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return false;
  json m = json::parse(in, nullptr, false);
  return !m.is_discarded() && m.value("complete", false);
}

namespace detail {

inline std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

}  // namespace detail

// Re-aggregates whatever cells exist on disk: one summary CSV row per cell and
// one plot band per (method, goals, contexts) group, pointwise mean +/- std
// across seeds. Safe to call on a partially finished sweep.
inline fs::path write_report(const SweepSpec& spec, const fs::path& root) {
  auto cells = expand(spec);
  std::ostringstream csv;
  csv << "name,method,goals,contexts,seed,status,convergence_episode,env_steps,"
         "wall_seconds,train_mean_reward,val_mean_reward,val_std_reward,"
         "val_successes,val_collisions,error\n";

  struct Group {
    std::string label;
    std::vector<sampling::LearningCurve> curves;
  };
  std::vector<Group> groups;
  auto group_for = [&](const config::ExperimentConfig& c) -> Group& {
    std::string label = std::string(config::to_string(c.method)) + " g" +
                        std::to_string(c.goals) + " c" + std::to_string(c.train_contexts);
    for (auto& g : groups)
      if (g.label == label) return g;
    groups.push_back(Group{label, {}});
    return groups.back();
  };

  for (const auto& c : cells) {
    std::string name = config::default_run_name(c);
    fs::path dir = root / name;
    csv << name << ',' << config::to_string(c.method) << ',' << c.goals << ','
        << c.train_contexts << ',' << c.seed << ',';
    std::ifstream min(dir / "manifest.json");
    json m = min ? json::parse(min, nullptr, false) : json();
    if (!min || m.is_discarded() || !m.value("complete", false)) {
      csv << "missing,,,,,,,,,\n";
      continue;
    }
    csv << "complete,";
    if (m.contains("convergence_episode") && !m["convergence_episode"].is_null())
      csv << m["convergence_episode"].get<int>();
    csv << ',';
    if (m.contains("env_steps")) csv << m["env_steps"].get<long long>();
    csv << ',' << io::format_double(m.value("wall_seconds", 0.0)) << ',';
    if (m.contains("train_eval"))
      csv << io::format_double(m["train_eval"].value("mean_reward", 0.0));
    csv << ',';
    if (m.contains("val_eval")) {
      csv << io::format_double(m["val_eval"].value("mean_reward", 0.0)) << ','
          << io::format_double(m["val_eval"].value("std_reward", 0.0)) << ','
          << m["val_eval"].value("successes", 0) << ','
          << m["val_eval"].value("collisions", 0);
    } else {
      csv << ",,,";
    }
    csv << ",\n";

    if (c.method != config::Method::BtBo) {
      std::string curve_text;
      try {
        curve_text = io::read_text_file(dir / "curve.csv");
        group_for(c).curves.push_back(io::curve_from_csv(curve_text));
      } catch (const std::exception&) {
        // cell without a readable curve simply does not join the plot
      }
    }
  }

  fs::create_directories(root);
  fs::path csv_path = root / "sweep_summary.csv";
  io::write_text_file(csv_path, csv.str());

  std::vector<svg::Series> series;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (g.curves.empty()) continue;
    std::size_t len = g.curves.front().size();
    for (const auto& cur : g.curves) len = std::min(len, cur.size());
    svg::Series s;
    s.label = g.label;
    s.color = detail::palette(gi);
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> vals;
      for (const auto& cur : g.curves) vals.push_back(cur[i].mean_reward);
      auto ms = sampling::mean_std(vals);
      s.x.push_back(g.curves.front()[i].episode);
      s.y.push_back(ms.mean);
      s.dy.push_back(ms.std);
    }
    series.push_back(std::move(s));
  }
  if (!series.empty())
    io::write_text_file(root / "sweep_curves.svg",
                        svg::learning_curve_plot("training sweep", series));
  return csv_path;
}

// Runs every cell of the grid, skipping directories whose manifest is already
// marked complete. A failing cell is recorded and the sweep moves on. Cells
// are independent, so they can run on a small worker pool.
inline std::vector<CellOutcome> run_sweep(const SweepSpec& spec, const fs::path& root) {
  auto cells = expand(spec);
  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  int workers = std::max(1, spec.workers);
  workers = std::min<int>(workers, static_cast<int>(cells.size()));

  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      CellOutcome& out = outcomes[i];
      out.cfg = cells[i];
      out.name = config::default_run_name(cells[i]);
      if (cell_complete(root / out.name)) {
        out.status = CellOutcome::Status::Skipped;
        continue;
      }
      try {
        experiment::run_experiment(cells[i], root);
        out.status = CellOutcome::Status::Ran;
      } catch (const std::exception& e) {
        out.status = CellOutcome::Status::Failed;
        out.error = detail::sanitize(e.what());
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  // Failure log survives next to the summary so partial sweeps stay auditable.
  std::ostringstream failures;
  for (const auto& out : outcomes)
    if (out.status == CellOutcome::Status::Failed)
      failures << out.name << ": " << out.error << '\n';
  fs::create_directories(root);
  io::write_text_file(root / "sweep_failures.txt", failures.str());

  write_report(spec, root);
  return outcomes;
}

}  // namespace btadapt::sweep
