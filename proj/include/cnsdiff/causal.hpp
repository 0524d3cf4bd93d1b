#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cnsdiff/corpus.hpp"
#include "cnsdiff/diffusion.hpp"
#include "cnsdiff/model.hpp"
#include "cnsdiff/splits.hpp"

namespace cnsdiff {

enum class EnvMode { popularity_quantile, timestamp_quantile, given };

std::string to_string(EnvMode mode);
EnvMode env_mode_from_string(const std::string& s);

// Environment proxy: equal-frequency quantile buckets over the chosen
// covariate, plus the empirical prior over train interactions.
struct EnvAssignment {
  int num_envs = 1;
  std::vector<double> prior;             // p0(e)
  std::vector<int32_t> interaction_env;  // per interaction
  std::vector<int32_t> item_env;         // per item (majority env in timestamp mode)
};

EnvAssignment assign_envs(const Dataset& dataset, const SplitBundle* split, EnvMode mode,
                          int num_envs, const std::vector<int32_t>* given_labels = nullptr,
                          bool uniform_prior = false);

// --- posterior head ---------------------------------------------------------

// q(e | z) = softmax(Wq z + bq), computed with max-subtraction.
template <typename T>
void posterior_probs(const Mat<T>& wq, const std::vector<T>& bq, const T* z, std::size_t d,
                     std::vector<T>& out) {
  const std::size_t E = bq.size();
  out.resize(E);
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t e = 0; e < E; ++e) {
    out[e] = bq[e] + dot(wq.row(e), z, d);
    mx = std::max(mx, out[e]);
  }
  T sum = T(0);
  for (std::size_t e = 0; e < E; ++e) {
    out[e] = std::exp(out[e] - mx);
    sum += out[e];
  }
  for (std::size_t e = 0; e < E; ++e) out[e] /= sum;
}

template <typename T>
std::vector<T> posterior(const Model<T>& model, const T* z) {
  std::vector<T> q;
  posterior_probs(model.dense.wq, model.dense.bq, z, model.dims.d, q);
  return q;
}

// KL(q || p0). Probabilities are clamped to [1e-12, 1] inside the logs;
// q_e = 0 contributes zero.
template <typename T>
T kl_to_prior(const std::vector<T>& q, const std::vector<double>& prior) {
  T s = T(0);
  for (std::size_t e = 0; e < q.size(); ++e) {
    if (q[e] <= T(0)) continue;
    const T qe = std::min(std::max(q[e], static_cast<T>(1e-12)), T(1));
    const T pe = static_cast<T>(std::min(std::max(prior[e], 1e-12), 1.0));
    s += q[e] * (std::log(qe) - std::log(pe));
  }
  return s;
}

// --- causal regularization term ---------------------------------------------
//
// Per trajectory transition (z_from at step t -> z_to), the term is
//   sum_e q(e|z_from) * ||z_to - mu(z_from,t,e)||^2 / (2 beta_t)
//   + KL(q(.|z_from) || p0),
// the negative variational bound with the Gaussian normalizer dropped. The
// expectation over environments is an exact enumeration.

template <typename T>
struct CausalPairWork {
  int t = 0;
  std::vector<T> q;
  std::vector<std::vector<T>> eps_hat;  // per env
  std::vector<NetCache<T>> caches;      // per env
  std::vector<std::vector<T>> mu;       // per env
  std::vector<T> recon;                 // per env
  T kl = T(0);
  T loss = T(0);
};

template <typename T>
T causal_pair_forward(const T* z_from, const T* z_to, int t, const DenseParams<T>& p,
                      const ModelDims& m, const std::vector<double>& prior,
                      const NoiseSchedule& sched, CausalPairWork<T>& work) {
  const int E = m.num_envs;
  work.t = t;
  posterior_probs(p.wq, p.bq, z_from, m.d, work.q);
  work.eps_hat.assign(E, std::vector<T>(m.d));
  work.caches.assign(E, {});
  work.mu.assign(E, std::vector<T>(m.d));
  work.recon.assign(E, T(0));
  const T half_inv_beta = static_cast<T>(0.5 / sched.beta(t));
  T expected_recon = T(0);
  for (int e = 0; e < E; ++e) {
    denoiser_forward(p, m, z_from, t, e, work.eps_hat[e].data(), &work.caches[e]);
    reverse_mean(z_from, work.eps_hat[e].data(), t, sched, work.mu[e].data(),
                 static_cast<std::size_t>(m.d));
    T acc = T(0);
    for (int i = 0; i < m.d; ++i) {
      const T r = z_to[i] - work.mu[e][i];
      acc += r * r;
    }
    work.recon[e] = half_inv_beta * acc;
    expected_recon += work.q[e] * work.recon[e];
  }
  work.kl = kl_to_prior(work.q, prior);
  work.loss = expected_recon + work.kl;
  return work.loss;
}

// dq entries supplied by the caller let the global-KL variant substitute its
// own KL gradient; pass nullptr for the default per-pair KL.
template <typename T>
void causal_pair_backward(const T* z_from, const T* z_to, const CausalPairWork<T>& w, T weight,
                          const DenseParams<T>& p, const ModelDims& m,
                          const std::vector<double>& prior, const NoiseSchedule& sched,
                          DenseParams<T>& g, std::type_identity_t<T>* dz_from,
                          std::type_identity_t<T>* dz_to,
                          const std::type_identity_t<T>* dq_override = nullptr) {
  const int E = m.num_envs;
  const int t = w.t;
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(sched.alpha(t)));
  const T coef = static_cast<T>(sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)));
  const T inv_beta = static_cast<T>(1.0 / sched.beta(t));

  // dL/dq_e: expected reconstruction plus the KL term (or the caller's).
  std::vector<T> dq(E);
  for (int e = 0; e < E; ++e) {
    T dkl = T(0);
    if (dq_override) {
      dkl = dq_override[e];
    } else {
      const T qe = std::min(std::max(w.q[e], static_cast<T>(1e-12)), T(1));
      const T pe = static_cast<T>(std::min(std::max(prior[e], 1e-12), 1.0));
      dkl = std::log(qe) - std::log(pe) + T(1);
    }
    dq[e] = weight * (w.recon[e] + dkl);
  }
  // Softmax backward into the head (and z_from when it is differentiable).
  T dot_qdq = T(0);
  for (int e = 0; e < E; ++e) dot_qdq += w.q[e] * dq[e];
  for (int e = 0; e < E; ++e) {
    const T dl = w.q[e] * (dq[e] - dot_qdq);
    g.bq[e] += dl;
    axpy(dl, z_from, g.wq.row(e), m.d);
    if (dz_from) axpy(dl, p.wq.row(e), dz_from, m.d);
  }
  // Reconstruction backward through mu and the denoiser.
  std::vector<T> deps(m.d);
  for (int e = 0; e < E; ++e) {
    const T we = weight * w.q[e] * inv_beta;
    for (int i = 0; i < m.d; ++i) {
      const T r = z_to[i] - w.mu[e][i];
      const T dmu = -we * r;
      if (dz_to) dz_to[i] += we * r;
      if (dz_from) dz_from[i] += inv_sqrt_alpha * dmu;
      deps[i] = -inv_sqrt_alpha * coef * dmu;
    }
    denoiser_backward(p, m, w.caches[e], e, deps.data(), g, dz_from);
  }
}

// Loss-only entry point over a list of transitions.
template <typename T>
struct CausalPairRef {
  const T* z_from;
  const T* z_to;
  int t;
};

template <typename T>
T causal_regularizer(const std::vector<CausalPairRef<T>>& pairs, const DenseParams<T>& p,
                     const ModelDims& m, const std::vector<double>& prior,
                     const NoiseSchedule& sched) {
  T total = T(0);
  CausalPairWork<T> work;
  for (const auto& pr : pairs) {
    total += causal_pair_forward(pr.z_from, pr.z_to, pr.t, p, m, prior, sched, work);
  }
  return total;
}

}  // namespace cnsdiff
