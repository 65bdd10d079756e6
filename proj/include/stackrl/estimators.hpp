#pragma once

#include <cstdint>
#include <vector>

#include "stackrl/environments.hpp"
#include "stackrl/numcore.hpp"
#include "stackrl/rng.hpp"

namespace stackrl {

// Softmax policy over discrete actions. An empty parameter vector denotes
// the degenerate single-action policy (used for adversary-free limits).
struct Policy {
  MlpSpec spec;
  Vec params;

  int n_params() const { return static_cast<int>(params.size()); }

  int sample(Rng& rng, const Vec& obs) const {
    if (params.size() == 0) return 0;
    Vec p = policy_probs(spec, params, obs);
    return rng.categorical({p.data(), static_cast<std::size_t>(p.size())});
  }
};

struct Transition {
  Vec obs_pro, obs_adv;
  int action_pro = 0, action_adv = 0;
  double reward_pro = 0.0;
  double logp_pro = 0.0, logp_adv = 0.0;  // cached at sampling time
};

struct Trajectory {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;
};

enum class PlayerSlot { kPro, kAdv };

// M independent trajectories with per-trajectory derived RNG streams, so
// the batch is invariant to worker scheduling. When `adv` is null the
// adversary's action is pinned to `fixed_adv_action`.
inline std::vector<Trajectory> rollout(const TwoPlayerEnv& env_proto, const Policy& pro,
                                       const Policy* adv, int M, std::uint64_t seed,
                                       int fixed_adv_action = 0) {
  std::vector<Trajectory> batch(M);
  for (int i = 0; i < M; ++i) {
    auto env = env_proto.clone();
    Rng rng = Rng::substream(seed, 2 * static_cast<std::uint64_t>(i));
    const std::uint64_t env_seed =
        Rng::substream(seed, 2 * static_cast<std::uint64_t>(i) + 1).next_u64();
    auto [obs_pro, obs_adv] = env->reset(env_seed);
    Trajectory& traj = batch[i];
    traj.seed = env_seed;
    for (int t = 0; t < env->descriptor().max_steps; ++t) {
      Transition tr;
      tr.obs_pro = obs_pro;
      tr.obs_adv = obs_adv;
      tr.action_pro = pro.sample(rng, obs_pro);
      tr.action_adv = adv ? adv->sample(rng, obs_adv) : fixed_adv_action;
      tr.logp_pro = pro.params.size()
                        ? log_prob(pro.spec, pro.params, obs_pro, tr.action_pro)
                        : 0.0;
      tr.logp_adv = (adv && adv->params.size())
                        ? log_prob(adv->spec, adv->params, obs_adv, tr.action_adv)
                        : 0.0;
      auto res = env->step(tr.action_pro, tr.action_adv);
      tr.reward_pro = res.reward_pro;
      traj.transitions.push_back(std::move(tr));
      if (res.done) break;
      obs_pro = res.next_obs_pro;
      obs_adv = res.next_obs_adv;
    }
  }
  return batch;
}

inline double discounted_return(const Trajectory& traj, double gamma) {
  if (gamma <= 0.0 || gamma > 1.0)
    throw ConfigError("discounted_return: gamma must be in (0, 1]");
  double total = 0.0;
  double g = 1.0;
  for (const auto& tr : traj.transitions) {
    total += g * tr.reward_pro;
    g *= gamma;
  }
  return total;
}

struct ReturnStats {
  std::vector<double> returns;
  double baseline = 0.0;  // arithmetic mean of the batch returns
};

inline ReturnStats compute_returns(const std::vector<Trajectory>& batch, double gamma) {
  ReturnStats stats;
  stats.returns.reserve(batch.size());
  double sum = 0.0;
  for (const auto& traj : batch) {
    const double r = discounted_return(traj, gamma);
    stats.returns.push_back(r);
    sum += r;
  }
  if (!batch.empty()) stats.baseline = sum / static_cast<double>(batch.size());
  return stats;
}

namespace detail {

inline const Vec& slot_obs(const Transition& tr, PlayerSlot slot) {
  return slot == PlayerSlot::kPro ? tr.obs_pro : tr.obs_adv;
}
inline int slot_action(const Transition& tr, PlayerSlot slot) {
  return slot == PlayerSlot::kPro ? tr.action_pro : tr.action_adv;
}

// Whole-trajectory score: sum_t grad log pi(a_t | s_t).
inline Vec trajectory_score(const Trajectory& traj, const Policy& policy, PlayerSlot slot) {
  Vec score = Vec::Zero(policy.n_params());
  for (const auto& tr : traj.transitions)
    score += log_prob_grad(policy.spec, policy.params, slot_obs(tr, slot),
                           slot_action(tr, slot));
  return score;
}

}  // namespace detail

// Likelihood-ratio estimator of the gradient of E[R] with respect to the
// chosen player's policy parameters:
//   (1/M) sum_tau (R(tau) - b) * sum_t grad log pi(a_t|s_t)
// with b the batch-mean return when baseline_on.
inline Vec estimate_first_order(const std::vector<Trajectory>& batch, const Policy& policy,
                                PlayerSlot slot, double gamma, bool baseline_on) {
  if (batch.empty()) throw ConfigError("estimate_first_order: empty batch");
  const ReturnStats stats = compute_returns(batch, gamma);
  const double b = baseline_on ? stats.baseline : 0.0;
  Vec acc = Vec::Zero(policy.n_params());
  for (std::size_t i = 0; i < batch.size(); ++i)
    acc += (stats.returns[i] - b) * detail::trajectory_score(batch[i], policy, slot);
  return acc / static_cast<double>(batch.size());
}

// Mixed second-order estimator:
//   (1/M) sum_tau w(tau) [sum_t grad_theta log pi_theta][sum_t grad_psi log pi_psi]^T
inline Mat estimate_mixed(const std::vector<Trajectory>& batch, const Policy& theta_policy,
                          const Policy& psi_policy, const std::vector<double>& weights) {
  if (batch.empty()) throw ConfigError("estimate_mixed: empty batch");
  if (weights.size() != batch.size())
    throw ConfigError("estimate_mixed: one weight per trajectory required");
  Mat acc = Mat::Zero(theta_policy.n_params(), psi_policy.n_params());
  if (acc.size() == 0) return acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (weights[i] == 0.0) continue;
    Vec s_theta = detail::trajectory_score(batch[i], theta_policy, PlayerSlot::kPro);
    Vec s_psi = detail::trajectory_score(batch[i], psi_policy, PlayerSlot::kAdv);
    acc.noalias() += weights[i] * (s_theta * s_psi.transpose());
  }
  return acc / static_cast<double>(batch.size());
}

namespace detail {

// Single-batch score-function Hessian term:
//   (1/M) sum_tau w(tau) [S S^T + sum_t hess log pi(a_t|s_t)], S the score.
inline Mat hessian_term(const std::vector<Trajectory>& batch, const Policy& psi_policy,
                        const std::vector<double>& weights) {
  const int n = psi_policy.n_params();
  Mat acc = Mat::Zero(n, n);
  if (n == 0) return acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (weights[i] == 0.0) continue;
    Vec s = trajectory_score(batch[i], psi_policy, PlayerSlot::kAdv);
    Mat term = s * s.transpose();
    for (const auto& tr : batch[i].transitions)
      term += log_prob_hessian(psi_policy.spec, psi_policy.params, tr.obs_adv,
                               tr.action_adv);
    acc.noalias() += weights[i] * term;
  }
  return acc / static_cast<double>(batch.size());
}

}  // namespace detail

// Estimator of the adversary-objective Hessian w.r.t. psi:
//   alpha * term(batch_pro, w = -R_pro) + (1-alpha) * term(batch_ora, w = R_ora),
// symmetrized. Both batches must be generated under the same psi.
inline Mat estimate_adv_hessian(const std::vector<Trajectory>& batch_pro,
                                const std::vector<Trajectory>& batch_ora,
                                const Policy& psi_policy, double alpha, double gamma) {
  const int n = psi_policy.n_params();
  if (n == 0) return Mat(0, 0);
  Mat acc = Mat::Zero(n, n);
  if (alpha != 0.0) {
    if (batch_pro.empty()) throw ConfigError("estimate_adv_hessian: empty protagonist batch");
    std::vector<double> w;
    for (const auto& traj : batch_pro) w.push_back(-discounted_return(traj, gamma));
    acc += alpha * detail::hessian_term(batch_pro, psi_policy, w);
  }
  if (alpha != 1.0) {
    if (batch_ora.empty()) throw ConfigError("estimate_adv_hessian: empty oracle batch");
    std::vector<double> w;
    for (const auto& traj : batch_ora) w.push_back(discounted_return(traj, gamma));
    acc += (1.0 - alpha) * detail::hessian_term(batch_ora, psi_policy, w);
  }
  return 0.5 * (acc + acc.transpose()).eval();
}

// Sample estimate of the adversary's objective
//   alpha * mean(-R_pro) + (1-alpha) * mean(R_ora),
// the oracle batch's mean return standing in for V*.
inline double adversary_objective_value(const std::vector<Trajectory>& batch_pro,
                                        const std::vector<Trajectory>& batch_ora,
                                        double alpha, double gamma) {
  double value = 0.0;
  if (alpha != 0.0) value += alpha * -compute_returns(batch_pro, gamma).baseline;
  if (alpha != 1.0) value += (1.0 - alpha) * compute_returns(batch_ora, gamma).baseline;
  return value;
}

// Everything Alg. 1 / Alg. 2 consume for one iteration.
struct GradientBundle {
  Vec grad_pro_theta;  // d/dtheta E[R_pro]
  Vec grad_pro_psi;    // d/dpsi   E[R_pro]
  Vec grad_adv_g1;     // d/dpsi   E[-R_pro]
  Vec grad_adv_g2;     // d/dpsi   E[R_ora]
  Mat mixed_theta_psi;  // n_theta x n_psi, d/dtheta d/dpsi f_adv
  Mat hess_adv_psi;     // n_psi x n_psi, d^2/dpsi^2 f_adv (symmetrized)
  int sample_count = 0;
};

inline GradientBundle estimate_bundle(const std::vector<Trajectory>& batch_pro,
                                      const std::vector<Trajectory>& batch_ora,
                                      const Policy& pro, const Policy& adv, double alpha,
                                      double gamma, bool baseline_on, bool need_mixed,
                                      bool need_hessian) {
  GradientBundle b;
  b.sample_count = static_cast<int>(batch_pro.size());
  b.grad_pro_theta = estimate_first_order(batch_pro, pro, PlayerSlot::kPro, gamma, baseline_on);
  if (adv.n_params() > 0) {
    b.grad_pro_psi = estimate_first_order(batch_pro, adv, PlayerSlot::kAdv, gamma, baseline_on);
    b.grad_adv_g1 = -b.grad_pro_psi;
    b.grad_adv_g2 = batch_ora.empty()
                        ? Vec::Zero(adv.n_params())
                        : estimate_first_order(batch_ora, adv, PlayerSlot::kAdv, gamma,
                                               baseline_on);
  } else {
    b.grad_pro_psi = Vec(0);
    b.grad_adv_g1 = Vec(0);
    b.grad_adv_g2 = Vec(0);
  }
  if (need_mixed && adv.n_params() > 0) {
    // Second-order estimators use raw returns (no baseline).
    std::vector<double> w;
    for (const auto& traj : batch_pro) w.push_back(alpha * -discounted_return(traj, gamma));
    b.mixed_theta_psi = estimate_mixed(batch_pro, pro, adv, w);
  } else {
    b.mixed_theta_psi = Mat::Zero(pro.n_params(), adv.n_params());
  }
  if (need_hessian && adv.n_params() > 0) {
    b.hess_adv_psi = estimate_adv_hessian(batch_pro, batch_ora, adv, alpha, gamma);
  } else {
    b.hess_adv_psi = Mat::Zero(adv.n_params(), adv.n_params());
  }
  return b;
}

}  // namespace stackrl
