#pragma once

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "stackrl/learners.hpp"

namespace stackrl {

// A checkpoint captures everything needed to resume or evaluate a run:
// every agent's architecture and flat parameter vector, the smoothed alpha,
// the iteration count, and identifiers tying it back to its config and seed.
struct Checkpoint {
  int format_version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string env_name;
  int iteration = 0;
  double alpha_current = 1.0;
  int neutral_adv_action = 0;
  Policy pro, adv, oracle;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_agent(std::ostream& os, const char* name, const Policy& p) {
  os << "agent " << name << "\n";
  os << "spec " << p.spec.input_dim << " " << p.spec.output_dim << " "
     << (p.spec.activation == Activation::Tanh ? "tanh" : "relu");
  for (int h : p.spec.hidden) os << " " << h;
  os << "\n";
  os << "params " << p.params.size() << "\n";
  for (Eigen::Index i = 0; i < p.params.size(); ++i)
    os << fmt_double(p.params[i]) << "\n";
}

inline Policy read_agent(std::istream& is, const std::string& expect_name) {
  std::string word, name;
  if (!(is >> word >> name) || word != "agent" || name != expect_name)
    throw InputError("checkpoint: expected agent " + expect_name);
  Policy p;
  std::string act;
  if (!(is >> word >> p.spec.input_dim >> p.spec.output_dim >> act) || word != "spec")
    throw InputError("checkpoint: malformed spec line for agent " + expect_name);
  p.spec.activation = act == "relu" ? Activation::Relu : Activation::Tanh;
  p.spec.hidden.clear();
  // Hidden widths run to end of line.
  std::string rest;
  std::getline(is, rest);
  std::istringstream hs(rest);
  int h;
  while (hs >> h) p.spec.hidden.push_back(h);
  Eigen::Index n;
  if (!(is >> word >> n) || word != "params")
    throw InputError("checkpoint: malformed params line for agent " + expect_name);
  p.params.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(is >> p.params[i]))
      throw InputError("checkpoint: truncated params for agent " + expect_name);
  if (n > 0 && static_cast<int>(p.spec.param_count()) != n)
    throw InputError("checkpoint: param count does not match spec for agent " +
                     expect_name);
  return p;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::ostringstream os;
  os << "stackrl-checkpoint v" << ck.format_version << "\n";
  os << "config_hash " << ck.config_hash << "\n";
  os << "seed " << ck.seed << "\n";
  os << "env " << ck.env_name << "\n";
  os << "iteration " << ck.iteration << "\n";
  os << "alpha " << detail::fmt_double(ck.alpha_current) << "\n";
  os << "neutral_adv_action " << ck.neutral_adv_action << "\n";
  detail::write_agent(os, "pro", ck.pro);
  detail::write_agent(os, "adv", ck.adv);
  detail::write_agent(os, "oracle", ck.oracle);
  return os.str();
}

inline Checkpoint deserialize_checkpoint(const std::string& text) {
  std::istringstream is(text);
  std::string word, tag;
  Checkpoint ck;
  if (!(is >> word >> tag) || word != "stackrl-checkpoint" || tag != "v1")
    throw InputError("checkpoint: unrecognized header");
  auto read_kv = [&](const char* key) -> std::string {
    std::string k, v;
    if (!(is >> k >> v) || k != key)
      throw InputError(std::string("checkpoint: expected key ") + key);
    return v;
  };
  ck.config_hash = std::stoull(read_kv("config_hash"));
  ck.seed = std::stoull(read_kv("seed"));
  ck.env_name = read_kv("env");
  ck.iteration = std::stoi(read_kv("iteration"));
  ck.alpha_current = std::stod(read_kv("alpha"));
  ck.neutral_adv_action = std::stoi(read_kv("neutral_adv_action"));
  ck.pro = detail::read_agent(is, "pro");
  ck.adv = detail::read_agent(is, "adv");
  ck.oracle = detail::read_agent(is, "oracle");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  out << serialize_checkpoint(ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace stackrl
