#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "stackrl/harness.hpp"
#include "stackrl/quad_game.hpp"

namespace stackrl {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace selftest_detail {

inline Vec softmax_vec(const Vec& logits) {
  Vec p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

inline Mat softmax_jacobian(const Vec& logits) {
  Vec p = softmax_vec(logits);
  return Mat(p.asDiagonal()) - p * p.transpose();
}

inline double grid_search_alpha(const Vec& g1, const Vec& g2) {
  double best_a = 0.0, best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10000; ++i) {
    const double a = i * 1e-4;
    const double v = (a * g1 + (1.0 - a) * g2).squaredNorm();
    if (v < best_v) {
      best_v = v;
      best_a = a;
    }
  }
  return best_a;
}

// Exact gradient bundle for the analytic quadratic game at (theta, psi).
inline GradientBundle quad_bundle(const QuadraticGameSpec& spec, double theta, double psi) {
  const QuadGameEval ev = quad_game_eval(spec, theta, psi);
  GradientBundle b;
  b.grad_pro_theta = Vec::Constant(1, ev.d_fpro_dtheta);
  b.grad_pro_psi = Vec::Constant(1, ev.d_fpro_dpsi);
  b.grad_adv_g1 = Vec::Constant(1, ev.d_fadv_dpsi);
  b.grad_adv_g2 = Vec::Zero(1);
  b.mixed_theta_psi = Mat::Constant(1, 1, ev.d2_fadv_dtheta_dpsi);
  b.hess_adv_psi = Mat::Constant(1, 1, ev.d2_fadv_dpsi2);
  b.sample_count = 1;
  return b;
}

}  // namespace selftest_detail

// 1. Finite-difference validation of MLP log-probability gradients, with
//    exact-Hessian spot checks, across 100 random architectures.
inline CheckResult check_gradients() {
  using namespace selftest_detail;
  CheckResult out{"gradient-and-hessian finite differences", true, ""};
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng = Rng::substream(0xC0FFEE, static_cast<std::uint64_t>(i));
    const int in_dim = 1 + static_cast<int>(rng.next_u64() % 5);
    const int out_dim = 2 + static_cast<int>(rng.next_u64() % 4);
    std::vector<int> hidden{2 + static_cast<int>(rng.next_u64() % 15)};
    if (rng.next_u64() % 2) hidden.push_back(2 + static_cast<int>(rng.next_u64() % 15));
    MlpSpec spec{in_dim, out_dim, hidden, Activation::Tanh};
    Vec params = init_params(spec, rng.next_u64());
    Vec obs(in_dim);
    for (int k = 0; k < in_dim; ++k) obs[k] = rng.uniform(-1.0, 1.0);
    const int action = static_cast<int>(rng.next_u64() % out_dim);

    const Vec g = log_prob_grad(spec, params, obs, action);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      Vec p = params;
      p[k] += h;
      const double up = log_prob(spec, p, obs, action);
      p[k] -= 2 * h;
      const double dn = log_prob(spec, p, obs, action);
      const double fd = (up - dn) / (2 * h);
      if (std::abs(fd - g[k]) > 1e-4 * (1.0 + std::abs(g[k]))) ++bad;
    }

    if (i % 10 == 0) {
      const Mat H = log_prob_hessian(spec, params, obs, action);
      const double hh = 1e-4;
      for (Eigen::Index k = 0; k < params.size(); ++k) {
        Vec p = params;
        p[k] += hh;
        const Vec up = log_prob_grad(spec, p, obs, action);
        p[k] -= 2 * hh;
        const Vec dn = log_prob_grad(spec, p, obs, action);
        const Vec fd = (up - dn) / (2 * hh);
        for (Eigen::Index j = 0; j < params.size(); ++j)
          if (std::abs(fd[j] - H(k, j)) > 1e-3 * (1.0 + std::abs(H(k, j)))) ++bad;
      }
    }
  }
  out.pass = bad == 0;
  out.detail = std::to_string(bad) + " entries outside tolerance";
  return out;
}

// 2. Unbiasedness of the score-function estimators at M = 1e5: first-order on
//    a two-armed bandit and mixed on a bilinear bandit-vs-bandit game, both
//    within three standard errors componentwise.
inline CheckResult check_estimator_unbiasedness() {
  using namespace selftest_detail;
  CheckResult out{"score-function estimator unbiasedness (M = 1e5, 3 SE)", true, ""};
  const int M_samples = 100000;
  int bad = 0;

  {
    Mat payoff(2, 1);
    payoff << 1.0, 0.0;
    MatrixGame env(payoff);
    Vec logits(2);
    logits << 0.3, -0.2;
    Policy pro{MlpSpec{0, 2, {}, Activation::Tanh}, logits};
    const Vec exact = softmax_jacobian(logits).col(0);
    auto batch = rollout(env, pro, nullptr, M_samples, 2024);
    Vec mean = Vec::Zero(2), m2 = Vec::Zero(2);
    for (const auto& traj : batch) {
      Vec g = estimate_first_order({traj}, pro, PlayerSlot::kPro, 1.0, false);
      mean += g;
      m2 += g.cwiseAbs2();
    }
    mean /= M_samples;
    for (int k = 0; k < 2; ++k) {
      const double var = m2[k] / M_samples - mean[k] * mean[k];
      const double se = std::sqrt(var / M_samples);
      if (std::abs(mean[k] - exact[k]) > 3.0 * se + 1e-12) ++bad;
    }
  }

  {
    Mat payoff(2, 2);
    payoff << 1.0, -1.0, -1.0, 1.0;
    MatrixGame env(payoff);
    Vec lp(2), lq(2);
    lp << 0.4, -0.1;
    lq << -0.3, 0.2;
    Policy pro{MlpSpec{0, 2, {}, Activation::Tanh}, lp};
    Policy adv{MlpSpec{0, 2, {}, Activation::Tanh}, lq};
    const Mat exact = softmax_jacobian(lp) * payoff * softmax_jacobian(lq);
    auto batch = rollout(env, pro, &adv, M_samples, 77);
    Mat mean = Mat::Zero(2, 2), m2 = Mat::Zero(2, 2);
    for (const auto& traj : batch) {
      const double w = traj.transitions[0].reward_pro;
      Mat g = estimate_mixed({traj}, pro, adv, {w});
      mean += g;
      m2 += g.cwiseAbs2();
    }
    mean /= M_samples;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        const double var = m2(r, c) / M_samples - mean(r, c) * mean(r, c);
        const double se = std::sqrt(var / M_samples);
        if (std::abs(mean(r, c) - exact(r, c)) > 3.0 * se + 1e-12) ++bad;
      }
  }

  {
    // Adversary Hessian on a 2-action bandit follower at alpha = 1, against
    // the analytic Hessian of E[-R] = w^T q for softmax q.
    Mat payoff(2, 2);
    payoff << 1.0, -1.0, 0.5, 0.25;
    MatrixGame env(payoff);
    Vec lp(2), lq(2);
    lp << 0.2, -0.4;
    lq << -0.1, 0.3;
    Policy pro{MlpSpec{0, 2, {}, Activation::Tanh}, lp};
    Policy adv{MlpSpec{0, 2, {}, Activation::Tanh}, lq};
    const Vec p = softmax_vec(lp), q = softmax_vec(lq);
    const Vec w = -(payoff.transpose() * p);  // E[-R] = sum_c w_c q_c
    const double s = w.dot(q);
    Mat exact(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        exact(i, j) = q[i] * ((i == j ? 1.0 : 0.0) - q[j]) * (w[i] - s) -
                      q[i] * q[j] * (w[j] - s);
    auto batch = rollout(env, pro, &adv, M_samples, 31337);
    Mat mean = Mat::Zero(2, 2), m2 = Mat::Zero(2, 2);
    for (const auto& traj : batch) {
      Mat h = estimate_adv_hessian({traj}, {}, adv, 1.0, 1.0);
      mean += h;
      m2 += h.cwiseAbs2();
    }
    mean /= M_samples;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        const double var = m2(r, c) / M_samples - mean(r, c) * mean(r, c);
        const double se = std::sqrt(var / M_samples);
        if (std::abs(mean(r, c) - exact(r, c)) > 3.0 * se + 1e-12) ++bad;
      }
  }

  out.pass = bad == 0;
  out.detail = std::to_string(bad) + " components outside 3 SE";
  return out;
}

// 3. MGDA closed-form alpha against a 1e-4 grid search on 1000 random pairs.
inline CheckResult check_mgda() {
  using namespace selftest_detail;
  CheckResult out{"MGDA closed form vs grid search (1000 pairs)", true, ""};
  int bad = 0;
  double worst = 0.0;

  // Hand cases with known optima.
  Vec e1(2), e2(2);
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  if (std::abs(mgda_alpha(e1, e2) - 0.5) > 1e-12) ++bad;  // symmetric pair
  Vec f1(2), f2(2);
  f1 << 4.0, 0.0;
  f2 << -1.0, 0.0;  // alpha* = (g2-g1).g2 / |g1-g2|^2 = 5/25 = 0.2
  if (std::abs(mgda_alpha(f1, f2) - 0.2) > 1e-12) ++bad;

  Rng rng(0x6D676461);
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 8);
    Vec g1(n), g2(n);
    for (int k = 0; k < n; ++k) {
      g1[k] = rng.normal() * rng.uniform(0.1, 3.0);
      g2[k] = rng.normal() * rng.uniform(0.1, 3.0);
    }
    const double a = mgda_alpha(g1, g2);
    const double grid = grid_search_alpha(g1, g2);
    const double err = std::abs(a - grid);
    worst = std::max(worst, err);
    if (err > 2e-4) ++bad;
  }
  out.pass = bad == 0;
  std::ostringstream d;
  d << bad << " pairs off grid optimum; worst gap " << worst;
  out.detail = d.str();
  return out;
}

// 4. On analytic quadratics Stack-PG contracts to the differentiable
//    Stackelberg equilibrium while GDA orbits the bilinear saddle forever.
inline CheckResult check_convergence_separation() {
  using namespace selftest_detail;
  CheckResult out{"Stack-PG converges where GDA cycles", true, ""};

  // f_pro = theta*psi, f_adv = -theta*psi - 0.5*psi^2.
  QuadraticGameSpec spec{1.0, 0.0, 0.0, -1.0, -0.5};
  const double cert = quad_second_total_derivative(spec);
  double theta = 1.0;
  const double gamma = 0.1;
  bool converged = false;
  for (int k = 0; k < 500; ++k) {
    const double psi = quad_best_response(spec, theta);
    GradientBundle b = quad_bundle(spec, theta, psi);
    theta += gamma * stackpg_direction(b, 0.0)[0];
    if (std::abs(theta) <= 1e-3) {
      converged = true;
      break;
    }
  }

  // GDA on the bilinear saddle f_pro = theta*psi, f_adv = -theta*psi.
  double gt = 1.0, gp = 1.0;
  bool ever_near = false, norm_ok = true;
  double prev_norm = std::sqrt(gt * gt + gp * gp);
  for (int k = 0; k < 1000; ++k) {
    const double nt = gt + 0.05 * gp;
    const double np = gp - 0.05 * gt;
    gt = nt;
    gp = np;
    const double norm = std::sqrt(gt * gt + gp * gp);
    if (norm < prev_norm - 1e-12) norm_ok = false;
    if (norm < 1e-3) ever_near = true;
    prev_norm = norm;
  }

  out.pass = converged && cert < 0.0 && !ever_near && norm_ok;
  std::ostringstream d;
  d << "stackpg |theta|=" << std::abs(theta) << ", certificate " << cert
    << ", gda final norm " << prev_norm;
  out.detail = d.str();
  return out;
}

// 5. Alpha extremes on the matrix game [[3,0],[2,2]]: alpha = 1 recovers the
//    maximin row, alpha = 0 the maximax row, with probability >= 0.9 in at
//    least 4 of 5 seeds each.
inline CheckResult check_alpha_extremes() {
  CheckResult out{"alpha extremes select maximin / maximax rows", true, ""};
  Mat payoff(2, 2);
  payoff << 3.0, 0.0, 2.0, 2.0;
  MatrixGame env(payoff);
  const auto report = brute_force_equilibria(payoff, 1.0);

  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kStackPG;
  setup.formulation = Formulation::kRrlStack;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.M = 16;
  setup.config.n_iter = 2000;
  setup.config.lr_theta = 0.02;
  setup.config.lr_psi = 0.02;
  setup.config.lr_omega = 0.05;

  auto count_hits = [&](double alpha, int target_row) {
    setup.config.alpha = alpha;
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      setup.seed = seed;
      auto res = train(setup);
      Vec p = policy_probs(res.state.pro.spec, res.state.pro.params, Vec(0));
      if (p[target_row] >= 0.9) ++hits;
    }
    return hits;
  };

  const int maximin_hits = count_hits(1.0, report.maximin_row);
  const int maximax_hits = count_hits(0.0, report.maximax_row);
  out.pass = maximin_hits >= 4 && maximax_hits >= 4;
  out.detail = "maximin " + std::to_string(maximin_hits) + "/5, maximax " +
               std::to_string(maximax_hits) + "/5 seeds at p >= 0.9";
  return out;
}

// 6. Stackelberg value dominates every Nash value for the leader on random
//    matrix games with a unique follower best response.
inline CheckResult check_se_dominates_ne() {
  CheckResult out{"Stackelberg leader value >= every Nash value", true, ""};
  Rng rng(0x5E4E);
  int bad = 0, tested = 0;
  while (tested < 50) {
    const int rows = 2 + static_cast<int>(rng.next_u64() % 3);
    const int cols = 2 + static_cast<int>(rng.next_u64() % 3);
    Mat M(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) M(r, c) = rng.uniform(-5.0, 5.0);
    const auto report = brute_force_equilibria(M, 1.0);
    if (!report.follower_best_response_unique) continue;
    ++tested;
    for (double ne : report.ne_pro_values)
      if (report.se_pro_value < ne - 1e-8) ++bad;
  }
  out.pass = bad == 0;
  out.detail = std::to_string(bad) + " violations over 50 games";
  return out;
}

// 7. Bit-identical training logs for the same config and seed.
inline CheckResult check_log_determinism() {
  CheckResult out{"training log is byte-identical across reruns", true, ""};
  Mat payoff(2, 2);
  payoff << 1.0, -1.0, -1.0, 1.0;
  MatrixGame env(payoff);
  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kStackPG;
  setup.formulation = Formulation::kRrlStack;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.M = 8;
  setup.config.n_iter = 25;
  setup.seed = 9;

  auto render = [&]() {
    std::ostringstream os;
    os << log_csv_header() << "\n";
    train(setup, [&](const LogRow& row) { os << log_row_csv(row) << "\n"; });
    return os.str();
  };
  const std::string a = render();
  const std::string b = render();
  out.pass = a == b;
  out.detail = out.pass ? "identical" : "logs differ";
  return out;
}

inline std::vector<CheckResult> run_selftest() {
  std::vector<std::function<CheckResult()>> checks = {
      check_gradients,        check_estimator_unbiasedness,
      check_mgda,             check_convergence_separation,
      check_alpha_extremes,   check_se_dominates_ne,
      check_log_determinism};
  std::vector<CheckResult> results;
  for (auto& c : checks) {
    try {
      results.push_back(c());
    } catch (const std::exception& e) {
      results.push_back({"(exception)", false, e.what()});
    }
  }
  return results;
}

}  // namespace stackrl
