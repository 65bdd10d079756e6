#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stackrl/estimators.hpp"

namespace stackrl {

enum class Learner { kStackPG, kGDA, kMaximin, kLOLA, kNoAdv };
enum class Formulation { kZeroSum, kRrlStack };

inline Learner learner_from_string(const std::string& s) {
  if (s == "stackpg") return Learner::kStackPG;
  if (s == "gda") return Learner::kGDA;
  if (s == "maximin") return Learner::kMaximin;
  if (s == "lola") return Learner::kLOLA;
  if (s == "no_adv") return Learner::kNoAdv;
  throw ConfigError("unknown learner: " + s);
}

inline Formulation formulation_from_string(const std::string& s) {
  if (s == "zero_sum") return Formulation::kZeroSum;
  if (s == "rrl_stack") return Formulation::kRrlStack;
  throw ConfigError("unknown formulation: " + s);
}

struct StackPGConfig {
  double lr_theta = 3e-3;
  double lr_psi = 3e-3;
  double lr_omega = 3e-3;
  double lambda = 1.0;
  double alpha = 1.0;
  bool auto_tuning = false;
  double rho = 0.9;  // EMA smoothing for auto-tuned alpha
  int M = 24;
  int oracle_steps_per_iter = 5;
  int n_iter = 300;
  bool baseline_on = true;
  bool use_adam = true;
  int eval_episodes_per_iter = 8;

  void validate() const {
    if (lr_theta <= 0 || lr_psi <= 0 || lr_omega <= 0)
      throw ConfigError("learning rates must be positive");
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    if (alpha < 0 || alpha > 1) throw ConfigError("alpha must be in [0, 1]");
    if (rho < 0 || rho >= 1) throw ConfigError("rho must be in [0, 1)");
    if (M < 1) throw ConfigError("M must be >= 1");
    if (oracle_steps_per_iter < 1)
      throw ConfigError("oracle_steps_per_iter must be >= 1 (the oracle must train)");
    if (n_iter < 0) throw ConfigError("n_iter must be >= 0");
    if (eval_episodes_per_iter < 1) throw ConfigError("eval_episodes_per_iter must be >= 1");
  }
};

// Stack-PG ascent direction for the protagonist:
//   grad_pro_theta + mixed * (-hess + lambda I)^{-1} grad_pro_psi.
inline Vec stackpg_direction(const GradientBundle& b, double lambda) {
  if (b.grad_pro_psi.size() == 0) return b.grad_pro_theta;
  Vec corr = regularized_solve(b.hess_adv_psi, lambda, b.grad_pro_psi);
  return b.grad_pro_theta + b.mixed_theta_psi * corr;
}

inline Vec stackpg_update(const GradientBundle& b, const Vec& theta, double lambda,
                          double lr_theta) {
  return theta + lr_theta * stackpg_direction(b, lambda);
}

// LOLA-style first-order look-ahead: the inverse-Hessian solve is replaced
// by the opponent's scalar step size.
inline Vec lola_direction(const GradientBundle& b, double lr_psi) {
  if (b.grad_pro_psi.size() == 0) return b.grad_pro_theta;
  return b.grad_pro_theta + b.mixed_theta_psi * (lr_psi * b.grad_pro_psi);
}

// Closed-form solution of min_alpha 0.5*||alpha g1 + (1-alpha) g2||^2 over [0,1].
inline double mgda_alpha(const Vec& g1, const Vec& g2) {
  if (g1.size() != g2.size()) throw ConfigError("mgda_alpha: dimension mismatch");
  const Vec diff = g1 - g2;
  const double denom = diff.squaredNorm();
  if (std::sqrt(denom) < 1e-12) return 0.5;
  const double a = (g2 - g1).dot(g2) / denom;
  return std::clamp(a, 0.0, 1.0);
}

struct AdversaryUpdate {
  Vec direction;   // alpha' g1 + (1 - alpha') g2
  double alpha = 1.0;  // alpha after the (optional) EMA step
};

// Alg. "MultiPolicyGradient" core: combine the two adversary gradients,
// optionally auto-tuning alpha by MGDA with EMA smoothing.
inline AdversaryUpdate multi_policy_gradient_direction(const Vec& g1, const Vec& g2,
                                                       double alpha_prev, bool auto_tuning,
                                                       double rho) {
  AdversaryUpdate out;
  out.alpha = alpha_prev;
  if (auto_tuning) {
    const double alpha_star = mgda_alpha(g1, g2);
    out.alpha = std::clamp(rho * alpha_prev + (1.0 - rho) * alpha_star, 0.0, 1.0);
  }
  out.direction = out.alpha * g1 + (1.0 - out.alpha) * g2;
  return out;
}

// Adam in ascent form; step() returns the parameter increment.
class AdamOptimizer {
 public:
  AdamOptimizer(int dim, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Vec::Zero(dim)), v_(Vec::Zero(dim)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  Vec step(const Vec& ascent_dir, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * ascent_dir;
    v_ = beta2_ * v_ + (1.0 - beta2_) * ascent_dir.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    return lr * (m_ / c1).cwiseQuotient(((v_ / c2).cwiseSqrt().array() + eps_).matrix());
  }

 private:
  Vec m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// Applies either a raw SGD ascent step or an Adam step.
class Ascender {
 public:
  Ascender(int dim, bool use_adam) {
    if (use_adam) adam_.emplace(dim);
  }
  void apply(Vec& params, const Vec& direction, double lr) {
    if (adam_)
      params += adam_->step(direction, lr);
    else
      params += lr * direction;
  }

 private:
  std::optional<AdamOptimizer> adam_;
};

// Mean episodic (undiscounted) return of `policy` against a fixed adversary
// action; used for the no-adversary training column and for eval sweeps.
inline double evaluate_policy(const TwoPlayerEnv& env, const Policy& policy,
                              int fixed_adv_action, int episodes, std::uint64_t seed) {
  auto batch = rollout(env, policy, nullptr, episodes, seed, fixed_adv_action);
  double total = 0.0;
  for (const auto& traj : batch) total += discounted_return(traj, 1.0);
  return total / static_cast<double>(episodes);
}

// Baselined policy-gradient ascent steps for the oracle against a frozen
// adversary; warm-starts from the incoming parameters.
inline void oracle_train(Policy& oracle, const Policy& adversary, const TwoPlayerEnv& env,
                         int steps, int M, double lr, double gamma, bool baseline_on,
                         Ascender& opt, std::uint64_t seed) {
  for (int s = 0; s < steps; ++s) {
    auto batch = rollout(env, oracle, &adversary, M, Rng::substream(seed, s).next_u64());
    Vec g = estimate_first_order(batch, oracle, PlayerSlot::kPro, gamma, baseline_on);
    opt.apply(oracle.params, g, lr);
  }
}

struct TrainState {
  Policy pro, adv, oracle;
  double alpha_current = 1.0;
  int iteration = 0;
};

struct LogRow {
  int iter = 0;
  double eval_return_no_adv = 0.0;
  double mean_r_pro = 0.0;
  double mean_r_ora = 0.0;
  double alpha = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_psi = 0.0;
  double correction_norm = 0.0;
  double lambda_used = 0.0;
  std::uint64_t seed = 0;
};

struct TrainSetup {
  const TwoPlayerEnv* env = nullptr;
  Learner learner = Learner::kStackPG;
  Formulation formulation = Formulation::kRrlStack;
  MlpSpec pro_spec, adv_spec, oracle_spec;
  StackPGConfig config;
  std::uint64_t seed = 0;
  int neutral_adv_action = 0;  // pinned adversary action for no_adv / eval
};

struct TrainResult {
  TrainState state;
  std::vector<LogRow> log;
};

// One full training run following the main-loop ordering: roll the
// protagonist and oracle batches, update the protagonist, update the
// adversary on the same batches, then train the oracle against the new
// adversary.
inline TrainResult train(const TrainSetup& setup,
                         const std::function<void(const LogRow&)>& on_iteration = {},
                         const TrainState* initial = nullptr) {
  if (!setup.env) throw ConfigError("train: no environment");
  StackPGConfig cfg = setup.config;
  cfg.validate();
  if (setup.formulation == Formulation::kZeroSum) {
    cfg.alpha = 1.0;
    cfg.auto_tuning = false;
  }
  const bool has_adversary = setup.learner != Learner::kNoAdv;
  const bool has_oracle =
      setup.formulation == Formulation::kRrlStack && has_adversary;
  const double gamma = setup.env->descriptor().gamma;

  TrainResult out;
  TrainState& st = out.state;
  if (initial) {
    st = *initial;
  } else {
    st.pro = Policy{setup.pro_spec, init_params(setup.pro_spec, Rng::substream(setup.seed, 1).next_u64())};
    st.adv = Policy{setup.adv_spec, has_adversary
                                        ? init_params(setup.adv_spec, Rng::substream(setup.seed, 2).next_u64())
                                        : Vec(0)};
    st.oracle = Policy{setup.oracle_spec,
                       has_oracle ? init_params(setup.oracle_spec, Rng::substream(setup.seed, 3).next_u64())
                                  : Vec(0)};
    st.alpha_current = cfg.alpha;
  }

  Ascender opt_theta(st.pro.n_params(), cfg.use_adam);
  Ascender opt_psi(st.adv.n_params(), cfg.use_adam);
  Ascender opt_omega(st.oracle.n_params(), cfg.use_adam);

  const bool needs_second_order =
      setup.learner == Learner::kStackPG || setup.learner == Learner::kLOLA;

  const int k0 = initial ? initial->iteration : 0;
  for (int k = k0 + 1; k <= k0 + cfg.n_iter; ++k) {
    st.iteration = k;
    const std::uint64_t iter_seed = Rng::substream(setup.seed, 1000 + k).next_u64();

    auto batch_pro =
        has_adversary
            ? rollout(*setup.env, st.pro, &st.adv, cfg.M, Rng::substream(iter_seed, 0).next_u64())
            : rollout(*setup.env, st.pro, nullptr, cfg.M, Rng::substream(iter_seed, 0).next_u64(),
                      setup.neutral_adv_action);
    std::vector<Trajectory> batch_ora;
    if (has_oracle)
      batch_ora = rollout(*setup.env, st.oracle, &st.adv, cfg.M,
                          Rng::substream(iter_seed, 1).next_u64());

    GradientBundle bundle =
        estimate_bundle(batch_pro, batch_ora, st.pro, st.adv, st.alpha_current, gamma,
                        cfg.baseline_on, needs_second_order,
                        setup.learner == Learner::kStackPG);

    LogRow row;
    row.iter = k;
    row.seed = setup.seed;
    row.mean_r_pro = compute_returns(batch_pro, gamma).baseline;
    row.mean_r_ora = has_oracle ? compute_returns(batch_ora, gamma).baseline : 0.0;
    row.grad_norm_theta = bundle.grad_pro_theta.norm();
    row.grad_norm_psi = has_adversary ? bundle.grad_adv_g1.norm() : 0.0;
    row.lambda_used = cfg.lambda;

    // Protagonist direction; a failing Hessian solve escalates lambda x10
    // up to 3 retries, then skips the whole iteration.
    Vec theta_dir;
    bool iteration_ok = true;
    if (setup.learner == Learner::kStackPG) {
      double lam = cfg.lambda;
      bool solved = false;
      for (int attempt = 0; attempt <= 3; ++attempt) {
        try {
          Vec corr = bundle.grad_pro_psi.size()
                         ? regularized_solve(bundle.hess_adv_psi, lam, bundle.grad_pro_psi)
                         : Vec(0);
          theta_dir = bundle.grad_pro_theta;
          if (corr.size()) theta_dir += bundle.mixed_theta_psi * corr;
          row.correction_norm = corr.size() ? (bundle.mixed_theta_psi * corr).norm() : 0.0;
          row.lambda_used = lam;
          solved = true;
          break;
        } catch (const NumericError&) {
          lam *= 10.0;
        }
      }
      if (!solved) {
        iteration_ok = false;
        row.lambda_used = lam;
      }
    } else if (setup.learner == Learner::kLOLA) {
      theta_dir = lola_direction(bundle, cfg.lr_psi);
      row.correction_norm =
          bundle.grad_pro_psi.size()
              ? (bundle.mixed_theta_psi * (cfg.lr_psi * bundle.grad_pro_psi)).norm()
              : 0.0;
    } else {
      theta_dir = bundle.grad_pro_theta;
    }

    if (iteration_ok) {
      opt_theta.apply(st.pro.params, theta_dir, cfg.lr_theta);

      if (has_adversary) {
        auto upd = multi_policy_gradient_direction(bundle.grad_adv_g1,
                                                   has_oracle ? bundle.grad_adv_g2
                                                              : Vec::Zero(st.adv.n_params()),
                                                   st.alpha_current, cfg.auto_tuning, cfg.rho);
        st.alpha_current = upd.alpha;
        opt_psi.apply(st.adv.params, upd.direction, cfg.lr_psi);

        if (setup.learner == Learner::kMaximin) {
          // Two further adversary steps on fresh rollouts (1:3 update ratio).
          for (int extra = 0; extra < 2; ++extra) {
            auto fresh_pro = rollout(*setup.env, st.pro, &st.adv, cfg.M,
                                     Rng::substream(iter_seed, 10 + 2 * extra).next_u64());
            std::vector<Trajectory> fresh_ora;
            if (has_oracle)
              fresh_ora = rollout(*setup.env, st.oracle, &st.adv, cfg.M,
                                  Rng::substream(iter_seed, 11 + 2 * extra).next_u64());
            Vec g1 = -estimate_first_order(fresh_pro, st.adv, PlayerSlot::kAdv, gamma,
                                           cfg.baseline_on);
            Vec g2 = has_oracle ? estimate_first_order(fresh_ora, st.adv, PlayerSlot::kAdv,
                                                       gamma, cfg.baseline_on)
                                : Vec::Zero(st.adv.n_params());
            auto upd2 = multi_policy_gradient_direction(g1, g2, st.alpha_current,
                                                        cfg.auto_tuning, cfg.rho);
            st.alpha_current = upd2.alpha;
            opt_psi.apply(st.adv.params, upd2.direction, cfg.lr_psi);
          }
        }
      }

      if (has_oracle)
        oracle_train(st.oracle, st.adv, *setup.env, cfg.oracle_steps_per_iter, cfg.M,
                     cfg.lr_omega, gamma, cfg.baseline_on, opt_omega,
                     Rng::substream(iter_seed, 2).next_u64());
    }

    row.alpha = st.alpha_current;
    row.eval_return_no_adv =
        evaluate_policy(*setup.env, st.pro, setup.neutral_adv_action,
                        cfg.eval_episodes_per_iter, Rng::substream(iter_seed, 3).next_u64());
    out.log.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  return out;
}

}  // namespace stackrl
