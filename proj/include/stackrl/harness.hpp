#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "stackrl/checkpoint.hpp"
#include "stackrl/config.hpp"
#include "stackrl/learners.hpp"

namespace stackrl {

// ---------------------------------------------------------------------------
// Training log CSV
// ---------------------------------------------------------------------------

inline std::string log_csv_header() {
  return "iter,eval_return_no_adv,mean_R_pro,mean_R_ora,alpha,"
         "grad_norm_theta,grad_norm_psi,correction_norm,lambda_used,seed";
}

inline std::string log_row_csv(const LogRow& r) {
  std::ostringstream os;
  os << r.iter << ',' << detail::fmt_double(r.eval_return_no_adv) << ','
     << detail::fmt_double(r.mean_r_pro) << ',' << detail::fmt_double(r.mean_r_ora) << ','
     << detail::fmt_double(r.alpha) << ',' << detail::fmt_double(r.grad_norm_theta) << ','
     << detail::fmt_double(r.grad_norm_psi) << ',' << detail::fmt_double(r.correction_norm)
     << ',' << detail::fmt_double(r.lambda_used) << ',' << r.seed;
  return os.str();
}

// Appends one complete line per iteration and flushes after each so a partial
// run still leaves a well-formed log.
class TrainingLogger {
 public:
  TrainingLogger(const std::string& path, std::uint64_t config_hash)
      : out_(path, std::ios::binary) {
    if (!out_) throw InputError("cannot open log file for writing: " + path);
    out_ << "# config_hash=" << config_hash << "\n" << log_csv_header() << "\n";
    out_.flush();
  }

  void write(const LogRow& row) {
    out_ << log_row_csv(row) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

inline std::string resolve_out_dir(const std::string& configured) {
  if (const char* env = std::getenv("STACKRL_OUT_DIR"); env && *env) return env;
  return configured;
}

inline Checkpoint make_checkpoint(const GameConfig& cfg, std::uint64_t seed,
                                  const TrainState& st) {
  Checkpoint ck;
  ck.config_hash = cfg.config_hash;
  ck.seed = seed;
  ck.env_name = cfg.env_name;
  ck.iteration = st.iteration;
  ck.alpha_current = st.alpha_current;
  ck.neutral_adv_action = cfg.neutral_adv_action;
  ck.pro = st.pro;
  ck.adv = st.adv;
  ck.oracle = st.oracle;
  return ck;
}

struct RunPaths {
  std::string log_csv;
  std::string checkpoint;
};

// Trains every seed in the config, writing <out>/train_seed<k>.csv and
// <out>/checkpoint_seed<k>.txt. Returns the written paths in seed order.
inline std::vector<RunPaths> run_experiment(const GameConfig& cfg,
                                            const std::string& out_dir_override = "") {
  const std::string out_dir =
      out_dir_override.empty() ? resolve_out_dir(cfg.out_dir) : out_dir_override;
  std::filesystem::create_directories(out_dir);
  auto env = make_env(cfg);
  std::vector<RunPaths> paths;
  for (std::uint64_t seed : cfg.seeds) {
    RunPaths p;
    p.log_csv = out_dir + "/train_seed" + std::to_string(seed) + ".csv";
    p.checkpoint = out_dir + "/checkpoint_seed" + std::to_string(seed) + ".txt";
    TrainingLogger logger(p.log_csv, cfg.config_hash);
    TrainSetup setup = make_setup(cfg, *env, seed);
    TrainResult res = train(setup, [&](const LogRow& row) { logger.write(row); });
    save_checkpoint(p.checkpoint, make_checkpoint(cfg, seed, res.state));
    paths.push_back(std::move(p));
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Evaluation sweeps
// ---------------------------------------------------------------------------

struct SweepSpec {
  std::string param;  // "aggressiveness" or "delay"
  int lo = 0;
  int hi = 0;
  int step = 1;

  std::vector<int> values() const {
    std::vector<int> v;
    for (int x = lo; x <= hi; x += step) v.push_back(x);
    return v;
  }
};

// Parses "param=lo..hi" or "param=lo..hi:step".
inline SweepSpec parse_sweep(const std::string& text) {
  SweepSpec s;
  const auto eq = text.find('=');
  const auto dots = text.find("..");
  if (eq == std::string::npos || dots == std::string::npos || dots < eq)
    throw InputError("sweep must look like param=lo..hi[:step]: " + text);
  s.param = text.substr(0, eq);
  try {
    s.lo = std::stoi(text.substr(eq + 1, dots - eq - 1));
    std::string tail = text.substr(dots + 2);
    if (const auto colon = tail.find(':'); colon != std::string::npos) {
      s.step = std::stoi(tail.substr(colon + 1));
      tail = tail.substr(0, colon);
    }
    s.hi = std::stoi(tail);
  } catch (const std::exception&) {
    throw InputError("sweep bounds must be integers: " + text);
  }
  if (s.step < 1) throw InputError("sweep step must be >= 1");
  if (s.hi < s.lo) throw InputError("sweep upper bound below lower bound");
  return s;
}

inline SweepSpec default_sweep(const std::string& env_name) {
  if (env_name == "highway_merge") return {"aggressiveness", 0, 10, 1};
  if (env_name == "delayed_lander") return {"delay", 0, 4, 1};
  throw InputError("no default sweep for environment: " + env_name);
}

// Checks that the sweep parameter belongs to the environment and that every
// swept value is a legal adversary action.
inline void validate_sweep(const SweepSpec& s, const EnvDescriptor& d) {
  const SweepSpec dflt = default_sweep(d.name);
  if (s.param != dflt.param)
    throw InputError("environment " + d.name + " sweeps over `" + dflt.param +
                     "`, not `" + s.param + "`");
  if (s.lo < 0 || s.hi >= d.n_actions_adv)
    throw InputError("sweep range outside [0, " + std::to_string(d.n_actions_adv - 1) + "]");
}

struct EvalRow {
  int sweep_value = 0;
  std::uint64_t seed = 0;  // training seed of the evaluated checkpoint
  double mean_return = 0.0;
};

struct EvalReport {
  std::string param;
  std::vector<EvalRow> rows;                       // one per (value, checkpoint)
  std::vector<int> values;                         // sweep values in order
  std::vector<double> agg_mean, agg_sd;            // per value, across checkpoints

  // Grand mean over every (value, checkpoint) cell: the scalar robustness score.
  double grand_mean() const {
    double t = 0.0;
    for (const auto& r : rows) t += r.mean_return;
    return rows.empty() ? 0.0 : t / static_cast<double>(rows.size());
  }
};

// Evaluates each checkpointed protagonist against every fixed adversary action
// in the sweep; the learned adversary is bypassed entirely.
inline EvalReport eval_sweep(const std::vector<Checkpoint>& cks, const SweepSpec& sweep,
                             int episodes) {
  if (cks.empty()) throw InputError("eval_sweep: no checkpoints");
  if (episodes < 1) throw InputError("eval_sweep: episodes must be >= 1");
  auto env = make_env(cks.front().env_name);
  validate_sweep(sweep, env->descriptor());
  EvalReport rep;
  rep.param = sweep.param;
  rep.values = sweep.values();
  for (int v : rep.values) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& ck : cks) {
      if (ck.env_name != cks.front().env_name)
        throw InputError("eval_sweep: checkpoints from different environments");
      const std::uint64_t eval_seed =
          Rng::substream(ck.seed ^ 0x45564131u, static_cast<std::uint64_t>(v)).next_u64();
      const double m = evaluate_policy(*env, ck.pro, v, episodes, eval_seed);
      rep.rows.push_back({v, ck.seed, m});
      sum += m;
      sumsq += m * m;
    }
    const double n = static_cast<double>(cks.size());
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    rep.agg_mean.push_back(mean);
    rep.agg_sd.push_back(std::sqrt(var));
  }
  return rep;
}

inline void write_eval_csv(std::ostream& os, const EvalReport& rep) {
  os << "sweep_param,sweep_value,seed,mean_return,agg_mean,agg_sd\n";
  std::size_t i = 0;
  const std::size_t per_value = rep.rows.size() / rep.values.size();
  for (std::size_t vi = 0; vi < rep.values.size(); ++vi)
    for (std::size_t k = 0; k < per_value; ++k, ++i) {
      const auto& r = rep.rows[i];
      os << rep.param << ',' << r.sweep_value << ',' << r.seed << ','
         << detail::fmt_double(r.mean_return) << ',' << detail::fmt_double(rep.agg_mean[vi])
         << ',' << detail::fmt_double(rep.agg_sd[vi]) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Alpha sweep
// ---------------------------------------------------------------------------

struct AlphaSweepRow {
  std::string label;    // "alpha=0.5" or "auto"
  double robust_score;  // grand-mean eval return over the default sweep
};

// Trains the configured learner once per alpha setting (plus optionally the
// auto-tuned variant) and scores each by its grand-mean return over the
// environment's default adversary sweep.
inline std::vector<AlphaSweepRow> alpha_sweep(const GameConfig& base,
                                              const std::vector<double>& alphas,
                                              bool include_auto,
                                              const std::string& out_dir_override = "") {
  const std::string root =
      out_dir_override.empty() ? resolve_out_dir(base.out_dir) : out_dir_override;
  const SweepSpec sweep = default_sweep(base.env_name);
  std::vector<AlphaSweepRow> table;

  auto run_one = [&](GameConfig cfg, const std::string& label, const std::string& sub) {
    cfg.out_dir = root + "/" + sub;
    auto paths = run_experiment(cfg, cfg.out_dir);
    std::vector<Checkpoint> cks;
    for (const auto& p : paths) cks.push_back(load_checkpoint(p.checkpoint));
    EvalReport rep = eval_sweep(cks, sweep, cfg.eval_episodes);
    std::ofstream csv(cfg.out_dir + "/eval_sweep.csv", std::ios::binary);
    write_eval_csv(csv, rep);
    table.push_back({label, rep.grand_mean()});
  };

  for (double a : alphas) {
    GameConfig cfg = base;
    cfg.stack.alpha = a;
    cfg.stack.auto_tuning = false;
    std::ostringstream label;
    label << "alpha=" << a;
    std::ostringstream sub;
    sub << "alpha_" << a;
    run_one(cfg, label.str(), sub.str());
  }
  if (include_auto) {
    GameConfig cfg = base;
    cfg.stack.auto_tuning = true;
    run_one(cfg, "auto", "alpha_auto");
  }
  return table;
}

// ---------------------------------------------------------------------------
// Trajectory dump
// ---------------------------------------------------------------------------

// Rolls `episodes` fresh episodes from a checkpoint and writes one CSV row per
// step. The checkpointed adversary plays if present; otherwise the pinned
// neutral action is used. State columns follow the environment's dump_state
// convention (lane-or-x, position-or-y, vx, vy).
inline void dump_trajectories(std::ostream& os, const Checkpoint& ck, int episodes,
                              std::uint64_t seed) {
  if (episodes < 1) throw InputError("dump-traj: episodes must be >= 1");
  auto proto = make_env(ck.env_name);
  const bool adv_plays = ck.adv.n_params() > 0;
  os << "episode,step,s0,s1,s2,s3,action_pro,action_adv,reward,collision,done\n";
  for (int ep = 0; ep < episodes; ++ep) {
    auto env = proto->clone();
    Rng rng = Rng::substream(seed, 2 * static_cast<std::uint64_t>(ep));
    const std::uint64_t env_seed =
        Rng::substream(seed, 2 * static_cast<std::uint64_t>(ep) + 1).next_u64();
    auto [obs_pro, obs_adv] = env->reset(env_seed);
    bool done = false;
    int t = 0;
    while (!done) {
      const int a_pro = ck.pro.sample(rng, obs_pro);
      const int a_adv = adv_plays ? ck.adv.sample(rng, obs_adv) : ck.neutral_adv_action;
      const auto st = env->dump_state();
      auto res = env->step(a_pro, a_adv);
      os << ep << ',' << t << ',' << detail::fmt_double(st[0]) << ','
         << detail::fmt_double(st[1]) << ',' << detail::fmt_double(st[2]) << ','
         << detail::fmt_double(st[3]) << ',' << a_pro << ',' << a_adv << ','
         << detail::fmt_double(res.reward_pro) << ',' << (res.info.collision ? 1 : 0) << ','
         << (res.done ? 1 : 0) << "\n";
      obs_pro = res.next_obs_pro;
      obs_adv = res.next_obs_adv;
      done = res.done;
      ++t;
    }
  }
}

}  // namespace stackrl
