#pragma once

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "cnsdiff/common.hpp"
#include "cnsdiff/model.hpp"
#include "cnsdiff/rng.hpp"

namespace cnsdiff {

// beta_t for t in [1, T]; alpha_bar(0) = 1 and alpha_bar is strictly
// decreasing. Stored in double regardless of the model scalar type.
struct NoiseSchedule {
  int total_steps = 0;
  std::vector<double> beta_;       // beta_[t-1] = beta_t
  std::vector<double> alpha_bar_;  // alpha_bar_[t], size T+1, [0] = 1

  double beta(int t) const { return beta_[t - 1]; }
  double alpha(int t) const { return 1.0 - beta_[t - 1]; }
  double alpha_bar(int t) const { return alpha_bar_[t]; }
};

inline NoiseSchedule make_schedule(int total_steps, double beta_start, double beta_end) {
  if (total_steps < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.total_steps = total_steps;
  s.beta_.resize(total_steps);
  for (int t = 0; t < total_steps; ++t) {
    s.beta_[t] = total_steps == 1
                     ? beta_start
                     : beta_start + (beta_end - beta_start) * t / (total_steps - 1);
  }
  s.alpha_bar_.resize(total_steps + 1);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t - 1]);
  }
  return s;
}

// The uniformly strided diffusion steps whose intermediate states become the
// negative candidates: t = t0 + k*s for t <= T.
struct StepSet {
  int t0 = 1;
  int stride = 1;
  std::vector<int> steps;  // ascending
};

inline StepSet make_step_set(int t0, int stride, int total_steps) {
  if (t0 < 1 || t0 > total_steps) throw ConfigError("step set: t0 must be in [1, T]");
  if (stride < 1) throw ConfigError("step set: stride must be >= 1");
  StepSet s;
  s.t0 = t0;
  s.stride = stride;
  for (int t = t0; t <= total_steps; t += stride) s.steps.push_back(t);
  return s;
}

// --- forward process -------------------------------------------------------

// x_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps. The noise is
// supplied by the caller (seeded in production, injectable in tests).
template <typename T>
void forward_sample(const T* z0, int t, const NoiseSchedule& sched, const T* eps, T* out,
                    std::size_t d) {
  const T a = static_cast<T>(std::sqrt(sched.alpha_bar(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(t)));
  for (std::size_t i = 0; i < d; ++i) out[i] = a * z0[i] + b * eps[i];
}

template <typename T>
std::vector<T> forward_sample(const std::vector<T>& z0, int t, const NoiseSchedule& sched,
                              const std::vector<T>& eps) {
  std::vector<T> out(z0.size());
  forward_sample(z0.data(), t, sched, eps.data(), out.data(), z0.size());
  return out;
}

// --- denoiser --------------------------------------------------------------

template <typename T>
void time_embedding(int t, int time_dim, T* out) {
  const int half = time_dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
    out[2 * i] = static_cast<T>(std::sin(t * freq));
    out[2 * i + 1] = static_cast<T>(std::cos(t * freq));
  }
  if (time_dim % 2 == 1) out[time_dim - 1] = T(0);
}

template <typename T>
struct NetCache {
  std::vector<T> input;  // [x | time emb | env emb]
  std::vector<T> a1, a2; // tanh activations
};

// Two-hidden-layer tanh MLP mapping (z_t, time, env) -> predicted noise.
template <typename T>
void denoiser_forward(const DenseParams<T>& p, const ModelDims& m, const T* x, int t, int env,
                      T* out, std::type_identity_t<NetCache<T>>* cache) {
  const int in_dim = m.net_input_dim();
  NetCache<T> local;
  NetCache<T>& c = cache ? *cache : local;
  c.input.resize(in_dim);
  for (int i = 0; i < m.d; ++i) c.input[i] = x[i];
  time_embedding(t, m.time_dim, c.input.data() + m.d);
  const T* ee = p.env_emb.row(env);
  for (int i = 0; i < m.env_dim; ++i) c.input[m.d + m.time_dim + i] = ee[i];

  c.a1.resize(m.hidden);
  for (int h = 0; h < m.hidden; ++h) {
    c.a1[h] = std::tanh(p.b1[h] + dot(p.w1.row(h), c.input.data(), in_dim));
  }
  c.a2.resize(m.hidden);
  for (int h = 0; h < m.hidden; ++h) {
    c.a2[h] = std::tanh(p.b2[h] + dot(p.w2.row(h), c.a1.data(), m.hidden));
  }
  for (int i = 0; i < m.d; ++i) {
    out[i] = p.b3[i] + dot(p.w3.row(i), c.a2.data(), m.hidden);
  }
}

// Accumulates parameter gradients and (optionally) the gradient w.r.t. the
// x part of the input.
template <typename T>
void denoiser_backward(const DenseParams<T>& p, const ModelDims& m, const NetCache<T>& c,
                       int env, const T* dout, DenseParams<T>& g,
                       std::type_identity_t<T>* dx) {
  const int in_dim = m.net_input_dim();
  std::vector<T> da2(m.hidden, T(0));
  for (int i = 0; i < m.d; ++i) {
    g.b3[i] += dout[i];
    axpy(dout[i], c.a2.data(), g.w3.row(i), m.hidden);
    axpy(dout[i], p.w3.row(i), da2.data(), m.hidden);
  }
  std::vector<T> da1(m.hidden, T(0));
  for (int h = 0; h < m.hidden; ++h) {
    const T dpre = da2[h] * (T(1) - c.a2[h] * c.a2[h]);
    g.b2[h] += dpre;
    axpy(dpre, c.a1.data(), g.w2.row(h), m.hidden);
    axpy(dpre, p.w2.row(h), da1.data(), m.hidden);
  }
  std::vector<T> dinput(in_dim, T(0));
  for (int h = 0; h < m.hidden; ++h) {
    const T dpre = da1[h] * (T(1) - c.a1[h] * c.a1[h]);
    g.b1[h] += dpre;
    axpy(dpre, c.input.data(), g.w1.row(h), in_dim);
    axpy(dpre, p.w1.row(h), dinput.data(), in_dim);
  }
  if (dx) {
    for (int i = 0; i < m.d; ++i) dx[i] += dinput[i];
  }
  T* de = g.env_emb.row(env);
  for (int i = 0; i < m.env_dim; ++i) de[i] += dinput[m.d + m.time_dim + i];
}

// --- noise-prediction (sampling) loss --------------------------------------

// Mean over dimensions of (eps - eps_hat)^2 with eps_hat predicted from the
// forward-corrupted state.
template <typename T>
T sampling_loss(const std::vector<T>& z0, int t, const std::vector<T>& eps,
                const DenseParams<T>& p, const ModelDims& m, int env,
                const NoiseSchedule& sched) {
  std::vector<T> xt = forward_sample(z0, t, sched, eps);
  std::vector<T> eps_hat(m.d);
  denoiser_forward(p, m, xt.data(), t, env, eps_hat.data(), nullptr);
  T s = T(0);
  for (int i = 0; i < m.d; ++i) {
    const T r = eps[i] - eps_hat[i];
    s += r * r;
  }
  return s / static_cast<T>(m.d);
}

// --- reverse process --------------------------------------------------------

// DDPM reverse mean: (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t).
template <typename T>
void reverse_mean(const T* x_t, const T* eps_hat, int t, const NoiseSchedule& sched, T* out,
                  std::size_t d) {
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(sched.alpha(t)));
  const T coef = static_cast<T>(sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)));
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
  }
}

// Full reverse chain from the largest selected step down to 0, recording the
// post-step state at every selected step as a candidate of that hardness.
// states[t] = x_t; candidate for step t is states[t-1]; states[0] is the
// denoised reconstruction.
template <typename T>
struct Trajectory {
  int t_max = 0;
  std::vector<std::vector<T>> states;         // indexed by t, 0..t_max
  std::vector<T> eps_forward;                 // corruption noise at t_max
  std::vector<std::vector<T>> reverse_noise;  // indexed by t, used for t in [2, t_max]
  std::vector<int> candidate_steps;           // ascending stepset steps

  const std::vector<T>& candidate(int i) const { return states[candidate_steps[i] - 1]; }
};

template <typename T>
Trajectory<T> run_reverse_trajectory(const T* z0, const StepSet& stepset,
                                     const DenseParams<T>& p, const ModelDims& m, int env,
                                     const NoiseSchedule& sched,
                                     const std::vector<T>& eps_forward,
                                     const std::vector<std::vector<T>>& reverse_noise) {
  Trajectory<T> tr;
  tr.t_max = stepset.steps.back();
  tr.candidate_steps = stepset.steps;
  tr.eps_forward = eps_forward;
  tr.reverse_noise = reverse_noise;
  tr.states.assign(tr.t_max + 1, {});
  tr.states[tr.t_max].resize(m.d);
  forward_sample(z0, tr.t_max, sched, eps_forward.data(), tr.states[tr.t_max].data(),
                 static_cast<std::size_t>(m.d));
  std::vector<T> eps_hat(m.d);
  for (int t = tr.t_max; t >= 1; --t) {
    denoiser_forward(p, m, tr.states[t].data(), t, env, eps_hat.data(), nullptr);
    std::vector<T>& next = tr.states[t - 1];
    next.resize(m.d);
    reverse_mean(tr.states[t].data(), eps_hat.data(), t, sched, next.data(),
                 static_cast<std::size_t>(m.d));
    if (t > 1) {
      const T sigma = static_cast<T>(std::sqrt(sched.beta(t)));
      const std::vector<T>& xi = reverse_noise[t];
      for (int i = 0; i < m.d; ++i) next[i] += sigma * xi[i];
    }
  }
  return tr;
}

// RNG-driven convenience wrapper returning the (t, h_t) candidate list.
template <typename T>
std::vector<std::pair<int, std::vector<T>>> reverse_generate(
    const std::vector<T>& z0, const StepSet& stepset, const DenseParams<T>& p,
    const ModelDims& m, int env, const NoiseSchedule& sched, Rng& rng) {
  const int t_max = stepset.steps.back();
  std::vector<T> eps(m.d);
  for (auto& x : eps) x = static_cast<T>(rng.gaussian());
  std::vector<std::vector<T>> xi(t_max + 1);
  for (int t = 2; t <= t_max; ++t) {
    xi[t].resize(m.d);
    for (auto& x : xi[t]) x = static_cast<T>(rng.gaussian());
  }
  Trajectory<T> tr = run_reverse_trajectory(z0.data(), stepset, p, m, env, sched, eps, xi);
  std::vector<std::pair<int, std::vector<T>>> out;
  out.reserve(stepset.steps.size());
  for (int t : stepset.steps) out.emplace_back(t, tr.states[t - 1]);
  return out;
}

}  // namespace cnsdiff
