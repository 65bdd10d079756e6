#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stackrl/learners.hpp"

namespace stackrl {

// Full experiment description parsed from a JSON config file. Unknown keys
// are rejected so typos cannot silently fall back to defaults.
struct GameConfig {
  std::string env_name;
  Mat payoff;  // matrix_game only
  Learner learner = Learner::kStackPG;
  Formulation formulation = Formulation::kRrlStack;
  StackPGConfig stack;
  std::vector<int> hidden_pro{32, 32};
  std::vector<int> hidden_adv{8, 8};
  std::vector<int> hidden_oracle{32, 32};
  Activation activation = Activation::Tanh;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int eval_episodes = 48;
  int neutral_adv_action = 0;
  std::string out_dir = "runs/out";
  std::uint64_t config_hash = 0;
};

inline std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline GameConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  static const std::set<std::string> known = {
      "env",          "payoff",       "learner",      "formulation",
      "alpha",        "auto_tuning",  "lr_theta",     "lr_psi",
      "lr_omega",     "lambda",       "rho",          "M",
      "oracle_steps_per_iter",        "n_iter",       "baseline_on",
      "use_adam",     "eval_episodes_per_iter",       "hidden_pro",
      "hidden_adv",   "hidden_oracle", "activation",  "seeds",
      "eval_episodes", "neutral_adv_action",          "out_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key: " + it.key());

  for (const char* required : {"env", "learner"})
    if (!j.contains(required))
      throw ConfigError(std::string("missing required key `") + required + "`");

  GameConfig cfg;
  cfg.config_hash = fnv1a_hash(text);
  try {
    cfg.env_name = j.at("env").get<std::string>();
    cfg.learner = learner_from_string(j.at("learner").get<std::string>());
    if (j.contains("formulation"))
      cfg.formulation = formulation_from_string(j["formulation"].get<std::string>());
    if (j.contains("payoff")) {
      auto rows = j["payoff"].get<std::vector<std::vector<double>>>();
      if (rows.empty() || rows[0].empty()) throw ConfigError("payoff must be non-empty");
      cfg.payoff.resize(rows.size(), rows[0].size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
          throw ConfigError("payoff rows must have equal length");
        for (std::size_t c = 0; c < rows[r].size(); ++c) cfg.payoff(r, c) = rows[r][c];
      }
    }
    auto& s = cfg.stack;
    if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
    if (j.contains("auto_tuning")) s.auto_tuning = j["auto_tuning"].get<bool>();
    if (j.contains("lr_theta")) s.lr_theta = j["lr_theta"].get<double>();
    if (j.contains("lr_psi")) s.lr_psi = j["lr_psi"].get<double>();
    if (j.contains("lr_omega")) s.lr_omega = j["lr_omega"].get<double>();
    if (j.contains("lambda")) s.lambda = j["lambda"].get<double>();
    if (j.contains("rho")) s.rho = j["rho"].get<double>();
    if (j.contains("M")) s.M = j["M"].get<int>();
    if (j.contains("oracle_steps_per_iter"))
      s.oracle_steps_per_iter = j["oracle_steps_per_iter"].get<int>();
    if (j.contains("n_iter")) s.n_iter = j["n_iter"].get<int>();
    if (j.contains("baseline_on")) s.baseline_on = j["baseline_on"].get<bool>();
    if (j.contains("use_adam")) s.use_adam = j["use_adam"].get<bool>();
    if (j.contains("eval_episodes_per_iter"))
      s.eval_episodes_per_iter = j["eval_episodes_per_iter"].get<int>();
    if (j.contains("hidden_pro")) cfg.hidden_pro = j["hidden_pro"].get<std::vector<int>>();
    if (j.contains("hidden_adv")) cfg.hidden_adv = j["hidden_adv"].get<std::vector<int>>();
    if (j.contains("hidden_oracle"))
      cfg.hidden_oracle = j["hidden_oracle"].get<std::vector<int>>();
    if (j.contains("activation")) {
      const std::string a = j["activation"].get<std::string>();
      if (a == "tanh")
        cfg.activation = Activation::Tanh;
      else if (a == "relu")
        cfg.activation = Activation::Relu;
      else
        throw ConfigError("activation must be `tanh` or `relu`");
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("eval_episodes")) cfg.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("neutral_adv_action"))
      cfg.neutral_adv_action = j["neutral_adv_action"].get<int>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }

  if (cfg.env_name == "matrix_game" && cfg.payoff.size() == 0)
    throw ConfigError("matrix_game requires a `payoff` matrix");
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (cfg.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (cfg.formulation == Formulation::kZeroSum) {
    cfg.stack.alpha = 1.0;
    cfg.stack.auto_tuning = false;
  }
  cfg.stack.validate();
  return cfg;
}

inline GameConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::unique_ptr<TwoPlayerEnv> make_env(const GameConfig& cfg) {
  return make_env(cfg.env_name, cfg.payoff.size() ? &cfg.payoff : nullptr);
}

// Builds the training setup for one seed from a parsed config.
inline TrainSetup make_setup(const GameConfig& cfg, const TwoPlayerEnv& env,
                             std::uint64_t seed) {
  const auto& d = env.descriptor();
  TrainSetup setup;
  setup.env = &env;
  setup.learner = cfg.learner;
  setup.formulation = cfg.formulation;
  setup.pro_spec = MlpSpec{d.obs_dim_pro, d.n_actions_pro, cfg.hidden_pro, cfg.activation};
  setup.adv_spec = MlpSpec{d.obs_dim_adv, d.n_actions_adv, cfg.hidden_adv, cfg.activation};
  setup.oracle_spec =
      MlpSpec{d.obs_dim_pro, d.n_actions_pro, cfg.hidden_oracle, cfg.activation};
  setup.config = cfg.stack;
  setup.seed = seed;
  setup.neutral_adv_action = cfg.neutral_adv_action;
  return setup;
}

}  // namespace stackrl
