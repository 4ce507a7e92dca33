#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "btadapt/env2d.hpp"
#include "btadapt/hrl.hpp"
#include "btadapt/sac.hpp"

namespace btadapt::config {

enum class Method { BtSac, SacFlat, BtEpisode, BtBo };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::BtSac: return "bt-sac";
    case Method::SacFlat: return "sac-flat";
    case Method::BtEpisode: return "bt-episode";
    case Method::BtBo: return "bt-bo";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "bt-sac") return Method::BtSac;
  if (s == "sac-flat") return Method::SacFlat;
  if (s == "bt-episode") return Method::BtEpisode;
  if (s == "bt-bo") return Method::BtBo;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct BoParams {
  int budget = 100;
  int init = 15;
  int multistart = 64;
  int refine_sweeps = 30;
  int refit_every = 5;
  bool shared = false;
};

// Everything a run needs; serialized verbatim into the run manifest so any
// artifact can be regenerated from manifest + seed.
struct ExperimentConfig {
  Method method = Method::BtSac;
  std::uint64_t seed = 1;
  std::string output_dir;  // empty: derive from method/contexts/seed

  int train_contexts = 20;
  std::uint64_t train_context_seed = 101;
  int val_contexts = 20;
  std::uint64_t val_context_seed = 202;

  int goals = 3;  // parameterized intermediate motions
  hrl::IndexEncoding encoding = hrl::IndexEncoding::Scalar;

  env::EnvConfig env;
  sac::SacConfig sac;  // obs/act dims derived per method at run time
  int episodes = 4000;
  int eval_period = 25;
  int flat_max_motions = 256;
  BoParams bo;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

struct KvStore {
  std::map<std::string, std::string> kv;  // "section.key" -> value
  std::map<std::string, bool> consumed;

  void set(const std::string& key, const std::string& value) {
    kv[key] = value;
    consumed[key] = false;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    consumed[key] = true;
    std::istringstream ss(it->second);
    if constexpr (std::is_same_v<T, bool>) {
      std::string v = it->second;
      if (v == "true" || v == "1") out = true;
      else if (v == "false" || v == "0") out = false;
      else throw std::invalid_argument("config: boolean expected for " + key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = it->second;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      std::string normalized = it->second;  // commas and spaces both separate
      std::replace(normalized.begin(), normalized.end(), ',', ' ');
      std::istringstream ls(normalized);
      out.clear();
      int x;
      while (ls >> x) out.push_back(x);
      if (!ls.eof()) throw std::invalid_argument("config: bad int list for " + key);
    } else {
      if (!(ss >> out) || !(ss >> std::ws).eof())
        throw std::invalid_argument("config: bad value for " + key);
    }
  }

  void check_all_consumed() const {
    for (const auto& [k, used] : consumed)
      if (!used) throw std::invalid_argument("config: unknown key '" + k + "'");
  }
};

}  // namespace detail

// Parses "section.key=value" assignments collected from a config file and/or
// command-line overrides into a config, starting from the given base.
inline ExperimentConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                   ExperimentConfig base = {}) {
  detail::KvStore store;
  for (const auto& [k, v] : pairs) store.set(k, v);

  ExperimentConfig c = base;
  std::string method = to_string(c.method), encoding, entropy;
  store.read("experiment.method", method);
  c.method = method_from_string(method);
  store.read("experiment.seed", c.seed);
  store.read("experiment.output", c.output_dir);

  store.read("contexts.train_n", c.train_contexts);
  store.read("contexts.train_seed", c.train_context_seed);
  store.read("contexts.val_n", c.val_contexts);
  store.read("contexts.val_seed", c.val_context_seed);

  store.read("tree.goals", c.goals);
  encoding = c.encoding == hrl::IndexEncoding::Scalar ? "scalar" : "one-hot";
  store.read("tree.encoding", encoding);
  if (encoding == "scalar") c.encoding = hrl::IndexEncoding::Scalar;
  else if (encoding == "one-hot") c.encoding = hrl::IndexEncoding::OneHot;
  else throw std::invalid_argument("config: tree.encoding must be scalar|one-hot");

  store.read("env.forbidden_zone", c.env.forbidden_zone);
  store.read("env.forbidden_height", c.env.forbidden_height);
  store.read("env.max_steps", c.env.max_steps);
  store.read("env.resolution", c.env.resolution);
  store.read("env.action_bound", c.env.action_bound);
  store.read("env.goal_weight", c.env.w_g);
  store.read("env.obstacle_weight", c.env.w_c);
  store.read("env.d_safe", c.env.d_safe);
  store.read("env.collision_penalty", c.env.collision_penalty);
  store.read("env.goal_eps", c.env.eps_goal);

  store.read("sac.hidden", c.sac.hidden);
  store.read("sac.gamma", c.sac.gamma);
  store.read("sac.tau", c.sac.tau);
  store.read("sac.lr", c.sac.lr);
  store.read("sac.batch", c.sac.batch);
  store.read("sac.buffer", c.sac.buffer_capacity);
  store.read("sac.warmup", c.sac.warmup_steps);
  store.read("sac.updates_per_step", c.sac.updates_per_step);
  store.read("sac.alpha_init", c.sac.alpha_init);
  store.read("sac.auto_alpha", c.sac.auto_alpha);
  store.read("sac.target_entropy", c.sac.target_entropy);

  store.read("train.episodes", c.episodes);
  store.read("train.eval_period", c.eval_period);
  store.read("train.flat_max_motions", c.flat_max_motions);

  store.read("bo.budget", c.bo.budget);
  store.read("bo.init", c.bo.init);
  store.read("bo.multistart", c.bo.multistart);
  store.read("bo.refine_sweeps", c.bo.refine_sweeps);
  store.read("bo.refit_every", c.bo.refit_every);
  store.read("bo.shared", c.bo.shared);

  store.check_all_consumed();
  return c;
}

// Key-value text with [section] headers; '#' starts a comment.
inline ExperimentConfig parse(const std::string& text, ExperimentConfig base = {}) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: bad section header at line " + std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty() || key.empty())
      throw std::invalid_argument("config: key outside section at line " + std::to_string(lineno));
    pairs.emplace_back(section + "." + key, value);
  }
  return from_pairs(pairs, base);
}

inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "[experiment]\n"
     << "method = " << to_string(c.method) << "\n"
     << "seed = " << c.seed << "\n"
     << "output = " << c.output_dir << "\n\n"
     << "[contexts]\n"
     << "train_n = " << c.train_contexts << "\n"
     << "train_seed = " << c.train_context_seed << "\n"
     << "val_n = " << c.val_contexts << "\n"
     << "val_seed = " << c.val_context_seed << "\n\n"
     << "[tree]\n"
     << "goals = " << c.goals << "\n"
     << "encoding = " << (c.encoding == hrl::IndexEncoding::Scalar ? "scalar" : "one-hot")
     << "\n\n"
     << "[env]\n"
     << "forbidden_zone = " << (c.env.forbidden_zone ? "true" : "false") << "\n"
     << "forbidden_height = " << c.env.forbidden_height << "\n"
     << "max_steps = " << c.env.max_steps << "\n"
     << "resolution = " << c.env.resolution << "\n"
     << "action_bound = " << c.env.action_bound << "\n"
     << "goal_weight = " << c.env.w_g << "\n"
     << "obstacle_weight = " << c.env.w_c << "\n"
     << "d_safe = " << c.env.d_safe << "\n"
     << "collision_penalty = " << c.env.collision_penalty << "\n"
     << "goal_eps = " << c.env.eps_goal << "\n\n"
     << "[sac]\n"
     << "hidden =";
  for (int h : c.sac.hidden) os << " " << h;
  os << "\n"
     << "gamma = " << c.sac.gamma << "\n"
     << "tau = " << c.sac.tau << "\n"
     << "lr = " << c.sac.lr << "\n"
     << "batch = " << c.sac.batch << "\n"
     << "buffer = " << c.sac.buffer_capacity << "\n"
     << "warmup = " << c.sac.warmup_steps << "\n"
     << "updates_per_step = " << c.sac.updates_per_step << "\n"
     << "alpha_init = " << c.sac.alpha_init << "\n"
     << "auto_alpha = " << (c.sac.auto_alpha ? "true" : "false") << "\n"
     << "target_entropy = " << c.sac.target_entropy << "\n\n"
     << "[train]\n"
     << "episodes = " << c.episodes << "\n"
     << "eval_period = " << c.eval_period << "\n"
     << "flat_max_motions = " << c.flat_max_motions << "\n\n"
     << "[bo]\n"
     << "budget = " << c.bo.budget << "\n"
     << "init = " << c.bo.init << "\n"
     << "multistart = " << c.bo.multistart << "\n"
     << "refine_sweeps = " << c.bo.refine_sweeps << "\n"
     << "refit_every = " << c.bo.refit_every << "\n"
     << "shared = " << (c.bo.shared ? "true" : "false") << "\n";
  return os.str();
}

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (c.goals < 1 || c.goals > 16) fail("tree.goals must be in [1,16]");
  if (c.train_contexts < 1) fail("contexts.train_n must be >= 1");
  if (c.val_contexts < 1) fail("contexts.val_n must be >= 1");
  if (c.episodes < 0) fail("train.episodes must be >= 0");
  if (c.eval_period < 1) fail("train.eval_period must be >= 1");
  if (c.flat_max_motions < 1) fail("train.flat_max_motions must be >= 1");
  if (c.sac.batch < 1) fail("sac.batch must be >= 1");
  if (c.sac.buffer_capacity < static_cast<std::size_t>(c.sac.batch))
    fail("sac.buffer must hold at least one batch");
  if (c.sac.hidden.empty()) fail("sac.hidden must not be empty");
  for (int h : c.sac.hidden)
    if (h < 1) fail("sac.hidden sizes must be positive");
  if (!(c.sac.gamma > 0.0 && c.sac.gamma < 1.0)) fail("sac.gamma must be in (0,1)");
  if (!(c.sac.tau > 0.0 && c.sac.tau <= 1.0)) fail("sac.tau must be in (0,1]");
  if (!(c.sac.lr > 0.0)) fail("sac.lr must be positive");
  if (c.env.max_steps < 1) fail("env.max_steps must be >= 1");
  if (!(c.env.resolution > 0.0)) fail("env.resolution must be positive");
  if (!(c.env.action_bound > 0.0)) fail("env.action_bound must be positive");
  if (c.bo.budget < 1) fail("bo.budget must be >= 1");
  if (c.bo.init < 1) fail("bo.init must be >= 1");
  if (c.train_context_seed == c.val_context_seed)
    fail("contexts.val_seed must differ from contexts.train_seed");
}

// Canonical run-directory leaf name when none is configured.
inline std::string default_run_name(const ExperimentConfig& c) {
  std::ostringstream os;
  os << to_string(c.method) << "-g" << c.goals << "-c" << c.train_contexts
     << (c.env.forbidden_zone ? "-fz" : "") << "-s" << c.seed;
  return os.str();
}

}  // namespace btadapt::config
