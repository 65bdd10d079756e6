#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stackrl/errors.hpp"
#include "stackrl/rng.hpp"

namespace stackrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { Tanh, Relu };

// Feed-forward softmax policy network description. Parameters live in a
// flat vector laid out per layer as [weights row-major, then biases],
// layers in forward order, so checkpoints are portable.
struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden;
  Activation activation = Activation::Tanh;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }

  // Sizes of the activations: input, hidden..., output.
  std::vector<int> dims() const {
    std::vector<int> d;
    d.reserve(hidden.size() + 2);
    d.push_back(input_dim);
    for (int h : hidden) d.push_back(h);
    d.push_back(output_dim);
    return d;
  }

  int param_count() const {
    auto d = dims();
    int n = 0;
    for (std::size_t l = 0; l + 1 < d.size(); ++l) n += (d[l] + 1) * d[l + 1];
    return n;
  }

  void validate() const {
    if (input_dim < 0 || output_dim <= 0)
      throw ConfigError("MlpSpec: input_dim must be >= 0 and output_dim > 0");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("MlpSpec: hidden widths must be positive");
  }
};

// Seeded uniform(-s, s) init with s = 1/sqrt(fan_in); keeps initial
// policies near-uniform.
inline Vec init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Vec params(spec.param_count());
  auto d = spec.dims();
  int off = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const int fan_in = d[l];
    const int fan_out = d[l + 1];
    const double s = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
    for (int i = 0; i < fan_in * fan_out; ++i) params[off++] = rng.uniform(-s, s);
    for (int i = 0; i < fan_out; ++i) params[off++] = rng.uniform(-s, s);
  }
  return params;
}

namespace detail {

inline void check_shapes(const MlpSpec& spec, const Vec& params, const Vec& obs) {
  if (static_cast<int>(obs.size()) != spec.input_dim)
    throw ConfigError("mlp: observation length " + std::to_string(obs.size()) +
                      " does not match input_dim " + std::to_string(spec.input_dim));
  if (static_cast<int>(params.size()) != spec.param_count())
    throw ConfigError("mlp: parameter vector length " + std::to_string(params.size()) +
                      " does not match spec parameter count " +
                      std::to_string(spec.param_count()));
}

struct ForwardCache {
  std::vector<Vec> pre;   // z_l per layer
  std::vector<Vec> post;  // h_l per layer (post[l] = activation(pre[l]), last = logits)
};

inline double act(Activation a, double z) {
  return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}
inline double act_d1(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}
inline double act_d2(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return -2.0 * t * (1.0 - t * t);
  }
  return 0.0;
}

inline void forward_cache(const MlpSpec& spec, const Vec& params, const Vec& obs,
                          ForwardCache& cache) {
  auto d = spec.dims();
  const int L = spec.layer_count();
  cache.pre.resize(L);
  cache.post.resize(L);
  const Vec* in = &obs;
  int off = 0;
  for (int l = 0; l < L; ++l) {
    const int fan_in = d[l];
    const int fan_out = d[l + 1];
    using RowMajorMap = Eigen::Map<
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    RowMajorMap W(params.data() + off, fan_out, fan_in);
    Eigen::Map<const Vec> b(params.data() + off + fan_in * fan_out, fan_out);
    off += (fan_in + 1) * fan_out;
    Vec z = b;
    if (fan_in > 0) z.noalias() += W * (*in);
    cache.pre[l] = z;
    if (l + 1 < L) {
      Vec h(fan_out);
      for (int i = 0; i < fan_out; ++i) h[i] = act(spec.activation, z[i]);
      cache.post[l] = std::move(h);
    } else {
      cache.post[l] = cache.pre[l];  // logits: no activation on the output layer
    }
    in = &cache.post[l];
  }
}

inline double log_sum_exp(const Vec& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec p = (z.array() - m).exp();
  return p / p.sum();
}

}  // namespace detail

inline Vec mlp_forward(const MlpSpec& spec, const Vec& params, const Vec& obs) {
  detail::check_shapes(spec, params, obs);
  detail::ForwardCache cache;
  detail::forward_cache(spec, params, obs, cache);
  return cache.post.back();
}

inline Vec policy_probs(const MlpSpec& spec, const Vec& params, const Vec& obs) {
  return detail::softmax(mlp_forward(spec, params, obs));
}

inline double log_prob(const MlpSpec& spec, const Vec& params, const Vec& obs,
                       int action_index) {
  detail::check_shapes(spec, params, obs);
  if (action_index < 0 || action_index >= spec.output_dim)
    throw InputError("log_prob: action index " + std::to_string(action_index) +
                     " out of range [0, " + std::to_string(spec.output_dim) + ")");
  detail::ForwardCache cache;
  detail::forward_cache(spec, params, obs, cache);
  const Vec& z = cache.post.back();
  return z[action_index] - detail::log_sum_exp(z);
}

// Exact gradient of log softmax(logits)[action] w.r.t. the flat parameters,
// by reverse accumulation through the layers.
inline Vec log_prob_grad(const MlpSpec& spec, const Vec& params, const Vec& obs,
                         int action_index) {
  detail::check_shapes(spec, params, obs);
  if (action_index < 0 || action_index >= spec.output_dim)
    throw InputError("log_prob_grad: action index out of range");
  auto d = spec.dims();
  const int L = spec.layer_count();
  detail::ForwardCache cache;
  detail::forward_cache(spec, params, obs, cache);

  Vec grad = Vec::Zero(spec.param_count());

  // delta on the output pre-activation: e_a - softmax(z)
  Vec delta = -detail::softmax(cache.post.back());
  delta[action_index] += 1.0;

  // Offsets of each layer in the flat vector.
  std::vector<int> offsets(L);
  {
    int off = 0;
    for (int l = 0; l < L; ++l) {
      offsets[l] = off;
      off += (d[l] + 1) * d[l + 1];
    }
  }

  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = d[l];
    const int fan_out = d[l + 1];
    const Vec& input = (l == 0) ? obs : cache.post[l - 1];
    using RowMajorMap = Eigen::Map<
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    RowMajorMap gW(grad.data() + offsets[l], fan_out, fan_in);
    Eigen::Map<Vec> gb(grad.data() + offsets[l] + fan_in * fan_out, fan_out);
    if (fan_in > 0) gW.noalias() = delta * input.transpose();
    gb = delta;
    if (l > 0) {
      using CRowMajorMap = Eigen::Map<
          const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
      CRowMajorMap W(params.data() + offsets[l], fan_out, fan_in);
      Vec back = W.transpose() * delta;
      const Vec& z_prev = cache.pre[l - 1];
      for (int i = 0; i < d[l]; ++i) back[i] *= detail::act_d1(spec.activation, z_prev[i]);
      delta = std::move(back);
    }
  }
  return grad;
}

// Exact Hessian of log_prob w.r.t. the flat parameters, computed by
// forward-over-reverse with all parameter directions carried at once so
// the inner loops stay dense matrix products. Output is symmetrized.
inline Mat log_prob_hessian(const MlpSpec& spec, const Vec& params, const Vec& obs,
                            int action_index) {
  detail::check_shapes(spec, params, obs);
  if (action_index < 0 || action_index >= spec.output_dim)
    throw InputError("log_prob_hessian: action index out of range");
  auto d = spec.dims();
  const int L = spec.layer_count();
  const int n = spec.param_count();
  detail::ForwardCache cache;
  detail::forward_cache(spec, params, obs, cache);

  std::vector<int> offsets(L);
  {
    int off = 0;
    for (int l = 0; l < L; ++l) {
      offsets[l] = off;
      off += (d[l] + 1) * d[l + 1];
    }
  }

  using CRowMajorMap = Eigen::Map<
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  // Forward sweep: directional derivatives of pre/post activations w.r.t.
  // every parameter. Rz[l], Rh[l] are dim_{l+1} x n.
  std::vector<Mat> Rz(L), Rh(L);
  for (int l = 0; l < L; ++l) {
    const int fan_in = d[l];
    const int fan_out = d[l + 1];
    const Vec& input = (l == 0) ? obs : cache.post[l - 1];
    Mat rz = Mat::Zero(fan_out, n);
    if (l > 0 && fan_in > 0) {
      CRowMajorMap W(params.data() + offsets[l], fan_out, fan_in);
      rz.noalias() = W * Rh[l - 1];
    }
    // Seed directions owned by this layer: W_{rc} perturbs z_r by input_c,
    // b_r perturbs z_r by 1.
    for (int r = 0; r < fan_out; ++r) {
      const int wrow = offsets[l] + r * fan_in;
      for (int c = 0; c < fan_in; ++c) rz(r, wrow + c) += input[c];
      rz(r, offsets[l] + fan_in * fan_out + r) += 1.0;
    }
    Rz[l] = std::move(rz);
    if (l + 1 < L) {
      Mat rh = Rz[l];
      const Vec& z = cache.pre[l];
      for (int i = 0; i < fan_out; ++i)
        rh.row(i) *= detail::act_d1(spec.activation, z[i]);
      Rh[l] = std::move(rh);
    }
  }

  // Reverse sweep with directional derivatives of each delta.
  Vec p = detail::softmax(cache.post.back());
  Vec delta = -p;
  delta[action_index] += 1.0;
  // Rdelta_L = -(diag(p) - p p^T) Rz_L
  Mat Rdelta = -(p.asDiagonal() * Rz[L - 1]);
  Rdelta.noalias() += p * (p.transpose() * Rz[L - 1]);

  Mat H = Mat::Zero(n, n);
  for (int l = L - 1; l >= 0; --l) {
    const int fan_in = d[l];
    const int fan_out = d[l + 1];
    const Vec& input = (l == 0) ? obs : cache.post[l - 1];
    // Hessian rows for this layer's parameters:
    //   d(gradW_{rc})/d(dir) = input_c * Rdelta_r + delta_r * Rinput_c
    //   d(gradb_r)/d(dir)    = Rdelta_r
    for (int r = 0; r < fan_out; ++r) {
      const int wrow = offsets[l] + r * fan_in;
      for (int c = 0; c < fan_in; ++c) {
        H.row(wrow + c) = input[c] * Rdelta.row(r);
        if (l > 0) H.row(wrow + c) += delta[r] * Rh[l - 1].row(c);
      }
      H.row(offsets[l] + fan_in * fan_out + r) = Rdelta.row(r);
    }
    if (l > 0) {
      CRowMajorMap W(params.data() + offsets[l], fan_out, fan_in);
      Vec u = W.transpose() * delta;               // pre-mask backprop signal
      Mat Ru = W.transpose() * Rdelta;             // dense part of R{u}
      // Structured part: direction W_{rc} contributes delta_r to u_c.
      for (int r = 0; r < fan_out; ++r) {
        const int wrow = offsets[l] + r * fan_in;
        for (int c = 0; c < fan_in; ++c) Ru(c, wrow + c) += delta[r];
      }
      const Vec& z_prev = cache.pre[l - 1];
      Vec new_delta(fan_in);
      Mat new_Rdelta(fan_in, n);
      for (int i = 0; i < fan_in; ++i) {
        const double d1 = detail::act_d1(spec.activation, z_prev[i]);
        const double d2 = detail::act_d2(spec.activation, z_prev[i]);
        new_delta[i] = u[i] * d1;
        new_Rdelta.row(i) = d1 * Ru.row(i) + (u[i] * d2) * Rz[l - 1].row(i);
      }
      delta = std::move(new_delta);
      Rdelta = std::move(new_Rdelta);
    }
  }

  H = 0.5 * (H + H.transpose()).eval();
  return H;
}

// Solves (-H + lambda*I) x = v by direct factorization. Throws NumericError
// with a condition estimate when the regularized system is still close to
// singular or the residual bound cannot be met.
inline Vec regularized_solve(const Mat& H, double lambda, const Vec& v) {
  if (H.rows() != H.cols())
    throw ConfigError("regularized_solve: H must be square");
  if (H.rows() != v.size())
    throw ConfigError("regularized_solve: dimension mismatch between H and v");
  if (lambda < 0.0) throw ConfigError("regularized_solve: lambda must be >= 0");
  if (v.size() == 0) return Vec(0);
  Mat A = -H;
  A.diagonal().array() += lambda;
  Eigen::FullPivLU<Mat> lu(A);
  double cond = std::numeric_limits<double>::infinity();
  if (lu.isInvertible()) {
    const double rcond = lu.rcond();
    cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  }
  if (!(cond <= 1e12))
    throw NumericError("regularized_solve: system near-singular, condition estimate " +
                           std::to_string(cond),
                       cond);
  Vec x = lu.solve(v);
  const double residual = (A * x - v).norm();
  if (!(residual <= 1e-8 * (1.0 + v.norm())))
    throw NumericError("regularized_solve: residual bound violated (" +
                           std::to_string(residual) + ")",
                       cond);
  return x;
}

}  // namespace stackrl
