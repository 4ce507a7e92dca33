#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "btadapt/evaluate.hpp"
#include "btadapt/sampling.hpp"

namespace btadapt::io {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-identical reruns
  if (!os) throw std::runtime_error("io: cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("io: write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("io: cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// episode,mean_reward,std_reward,success_rate,collision_rate
inline std::string curve_to_csv(const sampling::LearningCurve& curve) {
  std::ostringstream os;
  os << "episode,mean_reward,std_reward,success_rate,collision_rate\n";
  for (const auto& p : curve) {
    os << p.episode << ',' << format_double(p.mean_reward) << ','
       << format_double(p.std_reward) << ',' << format_double(p.success_rate) << ','
       << format_double(p.collision_rate) << '\n';
  }
  return os.str();
}

inline sampling::LearningCurve curve_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("episode,", 0) != 0)
    throw std::runtime_error("io: not a learning-curve CSV");
  sampling::LearningCurve curve;
  while (std::getline(is, line)) {
    if (line.empty() || line.front() == '#') continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw std::runtime_error("io: malformed curve row '" + line + "'");
    sampling::CurvePoint p;
    p.episode = std::stoi(f[0]);
    p.mean_reward = std::stod(f[1]);
    p.std_reward = std::stod(f[2]);
    p.success_rate = std::stod(f[3]);
    p.collision_rate = std::stod(f[4]);
    curve.push_back(p);
  }
  return curve;
}

// h_o,w_o,x_o with the generation seed kept in a comment.
inline std::string contexts_to_csv(const sampling::ContextSet& set) {
  std::ostringstream os;
  os << "# seed=" << set.seed << "\n";
  os << "h_o,w_o,x_o\n";
  for (const auto& c : set.contexts)
    os << format_double(c.h_o) << ',' << format_double(c.w_o) << ','
       << format_double(c.x_o) << '\n';
  return os.str();
}

inline sampling::ContextSet contexts_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  sampling::ContextSet set;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto pos = line.find("seed=");
      if (pos != std::string::npos) set.seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    if (!header_seen) {
      if (line.rfind("h_o,", 0) != 0) throw std::runtime_error("io: not a context CSV");
      header_seen = true;
      continue;
    }
    auto f = split_csv_line(line);
    if (f.size() != 3) throw std::runtime_error("io: malformed context row '" + line + "'");
    set.contexts.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2])});
  }
  return set;
}

// Per-context rows followed by commented aggregate lines.
inline std::string eval_report_to_csv(const eval::EvalReport& rep) {
  std::ostringstream os;
  os << "h_o,w_o,x_o,mean_reward,std_reward,successes,collisions,episodes\n";
  for (const auto& r : rep.rows) {
    os << format_double(r.context.h_o) << ',' << format_double(r.context.w_o) << ','
       << format_double(r.context.x_o) << ',' << format_double(r.mean_reward) << ','
       << format_double(r.std_reward) << ',' << r.successes << ',' << r.collisions << ','
       << r.episodes << '\n';
  }
  os << "# policy=" << rep.policy_id << "\n";
  os << "# context_seed=" << rep.context_seed << "\n";
  os << "# aggregate_mean_reward=" << format_double(rep.mean_reward) << "\n";
  os << "# aggregate_std_reward=" << format_double(rep.std_reward) << "\n";
  os << "# total_successes=" << rep.total_successes << "\n";
  os << "# total_collisions=" << rep.total_collisions << "\n";
  os << "# total_episodes=" << rep.total_episodes << "\n";
  return os.str();
}

}  // namespace btadapt::io
