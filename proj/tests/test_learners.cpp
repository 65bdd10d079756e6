#include "doctest.h"

#include <cmath>

#include "stackrl/learners.hpp"
#include "stackrl/quad_game.hpp"

using namespace stackrl;

namespace {

Vec scalar_vec(double x) {
  Vec v(1);
  v << x;
  return v;
}

Mat scalar_mat(double x) {
  Mat m(1, 1);
  m << x;
  return m;
}

// Exact-gradient bundle for the scalar quadratic Stackelberg game.
GradientBundle quad_bundle(const QuadraticGameSpec& s, double theta, double psi) {
  const QuadGameEval ev = quad_game_eval(s, theta, psi);
  GradientBundle b;
  b.grad_pro_theta = scalar_vec(ev.d_fpro_dtheta);
  b.grad_pro_psi = scalar_vec(ev.d_fpro_dpsi);
  b.grad_adv_g1 = scalar_vec(-ev.d_fpro_dpsi);
  b.grad_adv_g2 = scalar_vec(0.0);
  b.mixed_theta_psi = scalar_mat(ev.d2_fadv_dtheta_dpsi);
  b.hess_adv_psi = scalar_mat(ev.d2_fadv_dpsi2);
  b.sample_count = 1;
  return b;
}

double grid_search_alpha(const Vec& g1, const Vec& g2) {
  double best = 0.0, best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10000; ++i) {
    const double a = i * 1e-4;
    const double val = (a * g1 + (1 - a) * g2).squaredNorm();
    if (val < best_val) {
      best_val = val;
      best = a;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("stackpg_update: exact quadratic game step") {
  QuadraticGameSpec s{1.0, 0.0, 0.0, -1.0, -0.5};
  auto b = quad_bundle(s, 1.0, -1.0);  // psi at the best response r*(1) = -1
  Vec dir = stackpg_direction(b, 0.0);
  CHECK(dir[0] == doctest::Approx(-2.0));
  const double lr = 0.07;
  Vec next = stackpg_update(b, scalar_vec(1.0), 0.0, lr);
  CHECK(next[0] == doctest::Approx(1.0 - 2.0 * lr));
}

TEST_CASE("stackpg_update: zero mixed term reduces to plain policy gradient") {
  QuadraticGameSpec s{1.0, 0.5, 0.0, 0.0, -1.0};  // d = 0 decouples the players
  auto b = quad_bundle(s, 0.7, -0.3);
  Vec dir = stackpg_direction(b, 0.0);
  CHECK(dir[0] == doctest::Approx(b.grad_pro_theta[0]));
}

TEST_CASE("stackpg_update: huge lambda recovers the standard policy gradient") {
  GradientBundle b;
  Rng rng(3);
  const int nt = 6, np = 5;
  b.grad_pro_theta = Vec::NullaryExpr(nt, [&](int) { return rng.normal(); });
  b.grad_pro_psi = Vec::NullaryExpr(np, [&](int) { return rng.normal(); });
  b.mixed_theta_psi = Mat::NullaryExpr(nt, np, [&](int, int) { return rng.normal(); });
  Mat B = Mat::NullaryExpr(np, np, [&](int, int) { return rng.normal(); });
  b.hess_adv_psi = -(B * B.transpose());

  const double lambda = 1e9;
  Vec corr = regularized_solve(b.hess_adv_psi, lambda, b.grad_pro_psi);
  CHECK(corr.norm() <= 1e-6 * b.grad_pro_psi.norm());
  Vec dir = stackpg_direction(b, lambda);
  const double cosang =
      dir.dot(b.grad_pro_theta) / (dir.norm() * b.grad_pro_theta.norm());
  CHECK(std::acos(std::min(1.0, cosang)) <= 1e-3);
}

TEST_CASE("mgda_alpha: hand cases") {
  Vec g2(2);
  g2 << 0.7, -0.4;
  CHECK(mgda_alpha(-g2, g2) == doctest::Approx(0.5));

  Vec a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  CHECK(mgda_alpha(a, b) == doctest::Approx(0.5));

  Vec c(2);
  c << 2.0, 0.0;
  CHECK(mgda_alpha(c, b) == doctest::Approx(0.2));

  // Coincident gradients fall back to the midpoint.
  CHECK(mgda_alpha(g2, g2) == doctest::Approx(0.5));
}

TEST_CASE("mgda_alpha: matches grid search on random pairs") {
  Rng rng(17);
  for (int k = 0; k < 200; ++k) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 6);
    Vec g1 = Vec::NullaryExpr(n, [&](int) { return rng.normal(); });
    Vec g2 = Vec::NullaryExpr(n, [&](int) { return rng.normal(); });
    CHECK(std::abs(mgda_alpha(g1, g2) - grid_search_alpha(g1, g2)) <= 2e-4);
  }
}

TEST_CASE("multi_policy_gradient_direction: coefficients and EMA") {
  Vec g1(2), g2(2);
  g1 << 2.0, 0.0;
  g2 << 0.0, 1.0;

  // auto-tuning off, alpha = 1: pure zero-sum ascent on g1.
  auto fixed = multi_policy_gradient_direction(g1, g2, 1.0, false, 0.9);
  CHECK(fixed.alpha == 1.0);
  CHECK((fixed.direction - g1).norm() == 0.0);

  // rho = 1 freezes alpha regardless of alpha*.
  auto frozen = multi_policy_gradient_direction(g1, g2, 0.3, true, 1.0);
  CHECK(frozen.alpha == doctest::Approx(0.3));

  // EMA arithmetic: 0.9*0.5 + 0.1*mgda(g1,g2) with mgda = 0.2.
  auto ema = multi_policy_gradient_direction(g1, g2, 0.5, true, 0.9);
  CHECK(ema.alpha == doctest::Approx(0.47));
  CHECK((ema.direction - (0.47 * g1 + 0.53 * g2)).norm() <= 1e-12);
}

TEST_CASE("lola_direction: equals Stack-PG when (-H)^{-1} = lr_psi * I") {
  Rng rng(5);
  const double lr_psi = 0.03;
  GradientBundle b;
  const int nt = 4, np = 3;
  b.grad_pro_theta = Vec::NullaryExpr(nt, [&](int) { return rng.normal(); });
  b.grad_pro_psi = Vec::NullaryExpr(np, [&](int) { return rng.normal(); });
  b.mixed_theta_psi = Mat::NullaryExpr(nt, np, [&](int, int) { return rng.normal(); });
  b.hess_adv_psi = -(1.0 / lr_psi) * Mat::Identity(np, np);
  Vec lola = lola_direction(b, lr_psi);
  Vec stack = stackpg_direction(b, 0.0);
  CHECK((lola - stack).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("dynamics: Stack-PG converges to the DSE, GDA spirals on the bilinear game") {
  QuadraticGameSpec s{1.0, 0.0, 0.0, -1.0, -0.5};
  // Stack-PG with the follower at its best response each step:
  // theta_{k+1} = theta_k (1 - 2 lr).
  const double lr = 0.1;
  double theta = 1.0;
  int converged_at = -1;
  for (int k = 0; k < 500; ++k) {
    const double psi = quad_best_response(s, theta);
    auto b = quad_bundle(s, theta, psi);
    theta = stackpg_update(b, scalar_vec(theta), 0.0, lr)[0];
    CHECK(std::abs(theta) <= std::abs(1.0) * std::pow(1.0 - 2.0 * lr, k + 1) + 1e-12);
    if (std::abs(theta) <= 1e-3 && converged_at < 0) converged_at = k + 1;
  }
  CHECK(converged_at > 0);
  CHECK(converged_at <= 500);

  // DSE certificate at the terminal point.
  const double psi_star = quad_best_response(s, theta);
  CHECK(std::abs(quad_game_eval(s, theta, psi_star).d_fadv_dpsi) <= 1e-6);
  CHECK(std::abs(quad_total_derivative(s, theta, psi_star)) <= 1e-6);
  CHECK(quad_second_total_derivative(s) < 0.0);

  // GDA on the bilinear zero-sum game f = theta*psi from (1, 1).
  double th = 1.0, ps = 1.0, prev_norm = std::sqrt(2.0);
  const double g = 0.05;
  for (int k = 0; k < 1000; ++k) {
    const double nth = th + g * ps;  // ascend f_pro = theta*psi
    const double nps = ps - g * th;  // ascend -theta*psi
    th = nth;
    ps = nps;
    const double norm = std::hypot(th, ps);
    CHECK(norm >= prev_norm - 1e-12);
    CHECK(std::abs(th) + std::abs(ps) > 1e-3);
    prev_norm = norm;
  }
}

TEST_CASE("oracle_train: bandit dominant-action probability rises") {
  Mat payoff(2, 1);
  payoff << 1.0, 0.0;
  MatrixGame env(payoff);
  Policy oracle{MlpSpec{0, 2, {}, Activation::Tanh}, Vec::Zero(2)};
  Policy adv{MlpSpec{0, 1, {}, Activation::Tanh}, Vec::Zero(1)};
  Ascender opt(2, false);
  const double p_before = policy_probs(oracle.spec, oracle.params, Vec(0))[0];
  oracle_train(oracle, adv, env, 50, 32, 0.2, 1.0, true, opt, 7);
  const double p_after = policy_probs(oracle.spec, oracle.params, Vec(0))[0];
  CHECK(p_after > p_before + 0.1);
}

TEST_CASE("oracle_train: mean return improves in most seeded runs") {
  Mat payoff(3, 2);
  payoff << 1.0, 0.2, 0.0, 0.8, 0.4, 0.4;
  MatrixGame env(payoff);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Policy oracle{MlpSpec{0, 3, {}, Activation::Tanh}, init_params(MlpSpec{0, 3, {}, Activation::Tanh}, seed)};
    Policy adv{MlpSpec{0, 2, {}, Activation::Tanh}, init_params(MlpSpec{0, 2, {}, Activation::Tanh}, seed + 100)};
    const double before =
        compute_returns(rollout(env, oracle, &adv, 256, seed + 1), 1.0).baseline;
    Ascender opt(oracle.n_params(), false);
    oracle_train(oracle, adv, env, 50, 32, 0.2, 1.0, true, opt, seed + 2);
    const double after =
        compute_returns(rollout(env, oracle, &adv, 256, seed + 1), 1.0).baseline;
    if (after >= before) ++improved;
  }
  CHECK(improved >= 16);  // >= 80% of runs
}

TEST_CASE("train: deterministic given the seed") {
  Mat payoff(2, 2);
  payoff << 3.0, 0.0, 2.0, 2.0;
  MatrixGame env(payoff);
  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kStackPG;
  setup.formulation = Formulation::kRrlStack;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.alpha = 0.5;
  setup.config.M = 8;
  setup.config.n_iter = 25;
  setup.seed = 99;

  auto r1 = train(setup);
  auto r2 = train(setup);
  CHECK((r1.state.pro.params - r2.state.pro.params).norm() == 0.0);
  CHECK((r1.state.adv.params - r2.state.adv.params).norm() == 0.0);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].mean_r_pro == r2.log[i].mean_r_pro);
    CHECK(r1.log[i].eval_return_no_adv == r2.log[i].eval_return_no_adv);
    CHECK(r1.log[i].alpha == r2.log[i].alpha);
  }
}

TEST_CASE("train: zero-sum equals rrl_stack at fixed alpha = 1") {
  Mat payoff(2, 2);
  payoff << 1.0, -1.0, -1.0, 1.0;
  MatrixGame env(payoff);
  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kGDA;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.alpha = 1.0;
  setup.config.M = 8;
  setup.config.n_iter = 15;
  setup.seed = 5;

  setup.formulation = Formulation::kZeroSum;
  auto zs = train(setup);
  setup.formulation = Formulation::kRrlStack;
  auto rrl = train(setup);
  CHECK((zs.state.pro.params - rrl.state.pro.params).norm() == 0.0);
  CHECK((zs.state.adv.params - rrl.state.adv.params).norm() == 0.0);
}

TEST_CASE("train: auto-tuned alpha stays in [0,1]") {
  Mat payoff(2, 2);
  payoff << 3.0, 0.0, 2.0, 2.0;
  MatrixGame env(payoff);
  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kStackPG;
  setup.formulation = Formulation::kRrlStack;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.alpha = 0.5;
  setup.config.auto_tuning = true;
  setup.config.M = 8;
  setup.config.n_iter = 40;
  setup.seed = 12;
  auto r = train(setup);
  for (const auto& row : r.log) {
    CHECK(row.alpha >= 0.0);
    CHECK(row.alpha <= 1.0);
  }
}

TEST_CASE("train: alpha extremes select maximin / maximax rows") {
  // Desk-scale version of the full acceptance run: fewer iterations, one seed.
  Mat payoff(2, 2);
  payoff << 3.0, 0.0, 2.0, 2.0;
  MatrixGame env(payoff);
  auto report = brute_force_equilibria(payoff, 1.0);

  TrainSetup setup;
  setup.env = &env;
  setup.learner = Learner::kStackPG;
  setup.formulation = Formulation::kRrlStack;
  setup.pro_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.adv_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.oracle_spec = MlpSpec{0, 2, {}, Activation::Tanh};
  setup.config.M = 16;
  setup.config.n_iter = 800;
  setup.config.lr_theta = 0.01;
  setup.config.lr_psi = 0.01;
  setup.config.lr_omega = 0.05;
  setup.seed = 3;

  setup.config.alpha = 1.0;
  auto maximin_run = train(setup);
  Vec p1 = policy_probs(maximin_run.state.pro.spec, maximin_run.state.pro.params, Vec(0));
  CHECK(p1[report.maximin_row] >= 0.75);

  setup.config.alpha = 0.0;
  auto maximax_run = train(setup);
  Vec p0 = policy_probs(maximax_run.state.pro.spec, maximax_run.state.pro.params, Vec(0));
  CHECK(p0[report.maximax_row] >= 0.75);
}
