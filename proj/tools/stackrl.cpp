// Command-line front end: train, eval, alpha-sweep, selftest, dump-traj.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stackrl/harness.hpp"
#include "stackrl/selftest.hpp"

namespace {

using namespace stackrl;

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  GameConfig cfg = load_config(config_path);
  auto paths = run_experiment(cfg, out_dir);
  for (const auto& p : paths)
    std::cout << "wrote " << p.log_csv << " and " << p.checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::vector<std::string>& checkpoint_paths, const std::string& sweep_text,
             int episodes, const std::string& out_csv) {
  std::vector<Checkpoint> cks;
  for (const auto& p : checkpoint_paths) cks.push_back(load_checkpoint(p));
  const SweepSpec sweep =
      sweep_text.empty() ? default_sweep(cks.front().env_name) : parse_sweep(sweep_text);
  EvalReport rep = eval_sweep(cks, sweep, episodes);
  if (out_csv.empty()) {
    write_eval_csv(std::cout, rep);
  } else {
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw InputError("cannot open output file: " + out_csv);
    write_eval_csv(out, rep);
    std::cout << "wrote " << out_csv << "\n";
  }
  std::cout << "grand mean return: " << rep.grand_mean() << "\n";
  return 0;
}

int cmd_alpha_sweep(const std::string& config_path, const std::vector<double>& alphas,
                    bool include_auto, const std::string& out_dir) {
  GameConfig cfg = load_config(config_path);
  auto table = alpha_sweep(cfg, alphas, include_auto, out_dir);
  std::printf("%-12s %s\n", "setting", "robust_score");
  for (const auto& row : table)
    std::printf("%-12s %.6f\n", row.label.c_str(), row.robust_score);
  return 0;
}

int cmd_selftest() {
  const auto results = run_selftest();
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %s — %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all &= r.pass;
  }
  return all ? 0 : 1;
}

int cmd_dump_traj(const std::string& checkpoint_path, int episodes, std::uint64_t seed,
                  const std::string& out_csv) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (out_csv.empty()) {
    dump_trajectories(std::cout, ck, episodes, seed);
  } else {
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw InputError("cannot open output file: " + out_csv);
    dump_trajectories(out, ck, episodes, seed);
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stackrl: Stackelberg-game robust RL training harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_text, out_csv, checkpoint_path;
  std::vector<std::string> checkpoint_paths;
  std::vector<double> alphas;
  bool include_auto = false;
  int episodes = 48;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "train all seeds of a config");
  train_cmd->add_option("config", config_path, "JSON config file")->required();
  train_cmd->add_option("--out-dir", out_dir, "output directory override");

  auto* eval_cmd = app.add_subcommand("eval", "sweep a trained policy over adversary actions");
  eval_cmd->add_option("checkpoints", checkpoint_paths, "checkpoint file(s)")->required();
  eval_cmd->add_option("--sweep", sweep_text, "param=lo..hi[:step]");
  eval_cmd->add_option("--episodes", episodes, "episodes per (value, checkpoint) cell");
  eval_cmd->add_option("--out", out_csv, "write the report CSV here instead of stdout");

  auto* alpha_cmd = app.add_subcommand("alpha-sweep", "train and score several alpha settings");
  alpha_cmd->add_option("config", config_path, "JSON config file")->required();
  alpha_cmd->add_option("--alphas", alphas, "fixed alpha values")->delimiter(',')->required();
  alpha_cmd->add_flag("--auto", include_auto, "also run the auto-tuned alpha variant");
  alpha_cmd->add_option("--out-dir", out_dir, "output directory override");

  app.add_subcommand("selftest", "run the built-in analytic verification suite");

  auto* dump_cmd = app.add_subcommand("dump-traj", "dump rollout trajectories to CSV");
  dump_cmd->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  dump_cmd->add_option("--episodes", episodes, "number of episodes")->required();
  dump_cmd->add_option("--seed", seed, "rollout seed");
  dump_cmd->add_option("--out", out_csv, "write the CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(checkpoint_paths, sweep_text, episodes, out_csv);
    if (alpha_cmd->parsed()) return cmd_alpha_sweep(config_path, alphas, include_auto, out_dir);
    if (app.get_subcommand("selftest")->parsed()) return cmd_selftest();
    if (dump_cmd->parsed()) return cmd_dump_traj(checkpoint_path, episodes, seed, out_csv);
  } catch (const stackrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const stackrl::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
