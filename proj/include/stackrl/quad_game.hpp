#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "stackrl/errors.hpp"
#include "stackrl/numcore.hpp"

namespace stackrl {

// Scalar analytic Stackelberg testbed:
//   f_pro(theta, psi) = a*theta*psi + b*theta^2 + c*psi^2
//   f_adv(theta, psi) = d*theta*psi + e*psi^2,  e < 0
// The adversary's best response is unique: r*(theta) = -d*theta / (2e).
struct QuadraticGameSpec {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0, e = -1.0;

  void validate() const {
    if (!(e < 0.0))
      throw ConfigError("QuadraticGameSpec: e must be negative for a unique best response");
  }
};

struct QuadGameEval {
  double f_pro = 0.0;
  double f_adv = 0.0;
  double d_fpro_dtheta = 0.0;
  double d_fpro_dpsi = 0.0;
  double d_fadv_dpsi = 0.0;
  double d2_fadv_dpsi2 = 0.0;
  double d2_fadv_dtheta_dpsi = 0.0;
};

inline QuadGameEval quad_game_eval(const QuadraticGameSpec& s, double theta, double psi) {
  s.validate();
  QuadGameEval out;
  out.f_pro = s.a * theta * psi + s.b * theta * theta + s.c * psi * psi;
  out.f_adv = s.d * theta * psi + s.e * psi * psi;
  out.d_fpro_dtheta = s.a * psi + 2.0 * s.b * theta;
  out.d_fpro_dpsi = s.a * theta + 2.0 * s.c * psi;
  out.d_fadv_dpsi = s.d * theta + 2.0 * s.e * psi;
  out.d2_fadv_dpsi2 = 2.0 * s.e;
  out.d2_fadv_dtheta_dpsi = s.d;
  return out;
}

inline double quad_best_response(const QuadraticGameSpec& s, double theta) {
  s.validate();
  return -s.d * theta / (2.0 * s.e);
}

// d f_pro(theta, r*(theta)) / d theta via the implicit best response.
inline double quad_total_derivative(const QuadraticGameSpec& s, double theta, double psi) {
  const QuadGameEval ev = quad_game_eval(s, theta, psi);
  const double dr_dtheta = -s.d / (2.0 * s.e);
  return ev.d_fpro_dtheta + dr_dtheta * ev.d_fpro_dpsi;
}

// d^2 f_pro(theta, r*(theta)) / d theta^2; constant for this family.
inline double quad_second_total_derivative(const QuadraticGameSpec& s) {
  const double r = -s.d / (2.0 * s.e);
  return 2.0 * (s.a * r + s.b + s.c * r * r);
}

struct EquilibriumReport {
  int maximin_row = -1;
  int maximax_row = -1;
  int se_row = -1;
  double se_pro_value = 0.0;
  // Protagonist payoff at each pure Nash equilibrium (empty when none exist).
  std::vector<double> ne_pro_values;
  bool follower_best_response_unique = true;
};

// Exhaustive pure-strategy analysis of a small matrix game under the
// alpha-mixed follower objective
//   f_adv(row, col) = alpha * (-M[row][col]) + (1 - alpha) * max_r M[r][col].
inline EquilibriumReport brute_force_equilibria(const Mat& M, double alpha) {
  const int rows = static_cast<int>(M.rows());
  const int cols = static_cast<int>(M.cols());
  if (rows < 1 || cols < 1) throw ConfigError("brute_force_equilibria: empty payoff");
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("brute_force_equilibria: alpha must be in [0,1]");
  constexpr double kTie = 1e-12;

  EquilibriumReport rep;

  // Oracle value per column: the best the protagonist could do there.
  Vec col_best(cols);
  for (int c = 0; c < cols; ++c) col_best[c] = M.col(c).maxCoeff();

  Mat f_adv(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      f_adv(r, c) = alpha * (-M(r, c)) + (1.0 - alpha) * col_best[c];

  // Maximin / maximax rows.
  double best_min = -std::numeric_limits<double>::infinity();
  double best_max = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows; ++r) {
    const double row_min = M.row(r).minCoeff();
    const double row_max = M.row(r).maxCoeff();
    if (row_min > best_min) {
      best_min = row_min;
      rep.maximin_row = r;
    }
    if (row_max > best_max) {
      best_max = row_max;
      rep.maximax_row = r;
    }
  }

  // Stackelberg equilibrium by leader maximization over the follower's
  // best-response set (pessimistic tie-break inside the set).
  rep.se_pro_value = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows; ++r) {
    const double br_value = f_adv.row(r).maxCoeff();
    double leader_value = std::numeric_limits<double>::infinity();
    int n_br = 0;
    for (int c = 0; c < cols; ++c) {
      if (f_adv(r, c) >= br_value - kTie) {
        leader_value = std::min(leader_value, M(r, c));
        ++n_br;
      }
    }
    if (n_br > 1) rep.follower_best_response_unique = false;
    if (leader_value > rep.se_pro_value) {
      rep.se_pro_value = leader_value;
      rep.se_row = r;
    }
  }

  // Pure Nash equilibria by mutual best response.
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const bool pro_br = M(r, c) >= M.col(c).maxCoeff() - kTie;
      const bool adv_br = f_adv(r, c) >= f_adv.row(r).maxCoeff() - kTie;
      if (pro_br && adv_br) rep.ne_pro_values.push_back(M(r, c));
    }
  }
  return rep;
}

}  // namespace stackrl
