#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "btadapt/sac.hpp"

namespace btadapt::ckpt {

using Eigen::MatrixXd;

inline constexpr char kMagic[4] = {'B', 'T', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}

inline void write_matrix(std::ostream& os, const MatrixXd& m) {
  std::int64_t r = m.rows(), c = m.cols();
  put(os, &r, sizeof r);
  put(os, &c, sizeof c);
  put(os, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

inline MatrixXd read_matrix(std::istream& is) {
  std::int64_t r = 0, c = 0;
  get(is, &r, sizeof r);
  get(is, &c, sizeof c);
  if (r < 0 || c < 0 || r > (1 << 24) || c > (1 << 24))
    throw std::runtime_error("checkpoint: corrupt matrix header");
  MatrixXd m(r, c);
  get(is, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return m;
}

// Shape-checked in-place restore keeps optimizer ParamRef pointers valid.
inline void read_matrix_into(std::istream& is, MatrixXd& dst, const char* what) {
  MatrixXd m = read_matrix(is);
  if (m.rows() != dst.rows() || m.cols() != dst.cols())
    throw std::runtime_error(std::string("checkpoint: shape mismatch in ") + what);
  dst = std::move(m);
}

inline void write_mlp(std::ostream& os, nn::Mlp& net) {
  std::uint32_t layers = static_cast<std::uint32_t>(net.weights().size());
  put(os, &layers, sizeof layers);
  for (std::uint32_t l = 0; l < layers; ++l) {
    write_matrix(os, net.weights()[l]);
    write_matrix(os, net.biases()[l]);
  }
}

inline void read_mlp(std::istream& is, nn::Mlp& net, const char* what) {
  std::uint32_t layers = 0;
  get(is, &layers, sizeof layers);
  if (layers != net.weights().size())
    throw std::runtime_error(std::string("checkpoint: layer count mismatch in ") + what);
  for (std::uint32_t l = 0; l < layers; ++l) {
    read_matrix_into(is, net.weights()[l], what);
    read_matrix_into(is, net.biases()[l], what);
  }
}

inline void write_adam(std::ostream& os, nn::Adam& opt) {
  std::int64_t steps = opt.steps_taken();
  put(os, &steps, sizeof steps);
  std::uint32_t count = static_cast<std::uint32_t>(opt.moments_m().size());
  put(os, &count, sizeof count);
  for (std::uint32_t i = 0; i < count; ++i) {
    write_matrix(os, opt.moments_m()[i]);
    write_matrix(os, opt.moments_v()[i]);
  }
}

inline void read_adam(std::istream& is, nn::Adam& opt, const char* what) {
  std::int64_t steps = 0;
  get(is, &steps, sizeof steps);
  std::uint32_t count = 0;
  get(is, &count, sizeof count);
  if (count != opt.moments_m().size())
    throw std::runtime_error(std::string("checkpoint: optimizer state mismatch in ") + what);
  for (std::uint32_t i = 0; i < count; ++i) {
    read_matrix_into(is, opt.moments_m()[i], what);
    read_matrix_into(is, opt.moments_v()[i], what);
  }
  opt.set_steps_taken(steps);
}

}  // namespace detail

// Stores the run configuration text plus the complete learner state: all five
// networks, temperature, optimizer moments, and the update counter. Restoring
// into a same-shaped agent reproduces its behavior exactly.
inline void save(std::ostream& os, const std::string& config_text, sac::SacAgent& agent) {
  detail::put(os, kMagic, sizeof kMagic);
  detail::put(os, &kVersion, sizeof kVersion);
  std::uint64_t len = config_text.size();
  detail::put(os, &len, sizeof len);
  detail::put(os, config_text.data(), config_text.size());

  detail::write_mlp(os, agent.actor().trunk());
  detail::write_mlp(os, agent.q1());
  detail::write_mlp(os, agent.q2());
  detail::write_mlp(os, agent.q1_target());
  detail::write_mlp(os, agent.q2_target());
  detail::write_matrix(os, agent.log_alpha());
  detail::write_adam(os, agent.actor_opt());
  detail::write_adam(os, agent.q1_opt());
  detail::write_adam(os, agent.q2_opt());
  detail::write_adam(os, agent.alpha_opt());
  std::int64_t n = agent.n_updates();
  detail::put(os, &n, sizeof n);
}

inline void save_file(const std::string& path, const std::string& config_text,
                      sac::SacAgent& agent) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  save(os, config_text, agent);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::string read_header(std::istream& is) {
  char magic[4];
  detail::get(is, magic, sizeof magic);
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("checkpoint: bad magic");
  std::uint32_t version = 0;
  detail::get(is, &version, sizeof version);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t len = 0;
  detail::get(is, &len, sizeof len);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: oversized config header");
  std::string text(len, '\0');
  if (len > 0) detail::get(is, text.data(), len);
  return text;
}

// Returns the embedded configuration without touching the tensors.
inline std::string peek_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  return read_header(is);
}

// Restores into an agent of matching architecture; any shape difference is
// refused with a diagnostic rather than partially applied.
inline std::string restore(std::istream& is, sac::SacAgent& agent) {
  std::string config_text = read_header(is);
  detail::read_mlp(is, agent.actor().trunk(), "actor");
  detail::read_mlp(is, agent.q1(), "q1");
  detail::read_mlp(is, agent.q2(), "q2");
  detail::read_mlp(is, agent.q1_target(), "q1_target");
  detail::read_mlp(is, agent.q2_target(), "q2_target");
  detail::read_matrix_into(is, agent.log_alpha(), "log_alpha");
  detail::read_adam(is, agent.actor_opt(), "actor_opt");
  detail::read_adam(is, agent.q1_opt(), "q1_opt");
  detail::read_adam(is, agent.q2_opt(), "q2_opt");
  detail::read_adam(is, agent.alpha_opt(), "alpha_opt");
  std::int64_t n = 0;
  detail::get(is, &n, sizeof n);
  agent.set_n_updates(n);
  return config_text;
}

inline std::string restore_file(const std::string& path, sac::SacAgent& agent) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  return restore(is, agent);
}

}  // namespace btadapt::ckpt
