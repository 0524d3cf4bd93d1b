#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "cnsdiff/causal.hpp"
#include "cnsdiff/diffusion.hpp"
#include "cnsdiff/encoder.hpp"
#include "cnsdiff/model.hpp"
#include "cnsdiff/pairwise.hpp"
#include "cnsdiff/sampler.hpp"

namespace cnsdiff {

// --- scalar losses -----------------------------------------------------------

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// -log sigmoid(s_pos - s_neg), overflow-safe for |diff| up to 1e4 and beyond.
template <typename T>
T bpr_loss(T s_pos, T s_neg) {
  return softplus(s_neg - s_pos);
}

template <typename T>
T bpr_loss_mean(const std::vector<T>& s_pos, const std::vector<T>& s_neg) {
  PairwiseScalar<T> acc;
  for (std::size_t i = 0; i < s_pos.size(); ++i) acc.push(bpr_loss(s_pos[i], s_neg[i]));
  return acc.finalize() / static_cast<T>(s_pos.size());
}

// InfoNCE with max-subtraction: -log softmax of the positive logit against
// the negative logits, all scaled by 1/tau.
template <typename T>
T contrastive_loss(const T* anchor, const T* positive, const std::vector<const T*>& negatives,
                   T tau, std::size_t d) {
  const T inv_tau = T(1) / tau;
  std::vector<T> logits;
  logits.reserve(negatives.size() + 1);
  logits.push_back(dot(anchor, positive, d) * inv_tau);
  for (const T* n : negatives) logits.push_back(dot(anchor, n, d) * inv_tau);
  T mx = logits[0];
  for (T l : logits) mx = std::max(mx, l);
  T lse = T(0);
  for (T l : logits) lse += std::exp(l - mx);
  lse = mx + std::log(lse);
  return lse - logits[0];
}

// --- batch structures ---------------------------------------------------------

// One training example plus its prepared sampler outputs. The diffusion
// trajectory is generated during batch preparation with the then-current
// parameters; the loss consumes the generated candidates as data, exactly as
// it consumes a baseline sampler's drawn item.
template <typename T>
struct BatchExample {
  int32_t user = 0;
  int32_t pos_item = 0;
  int32_t neg_item = 0;  // random negative (cnsdiff) or the baseline sample
  int32_t env = 0;
  int t_mse = 1;
  std::vector<T> eps_mse;
};

template <typename T>
struct Batch {
  std::vector<BatchExample<T>> examples;
  std::vector<Trajectory<T>> trajectories;  // aligned with examples when generative
  int epoch = 0;
  double sampling_seconds = 0.0;  // wall clock of the reverse-chain generation
};

struct LossConfig {
  double lambda1 = 1e-3;
  double lambda2 = 1e-3;
  double lambda3 = 1e-3;
  double tau_temp = 0.2;
  double mix_alpha = 0.2;  // normalized curriculum weights for this epoch
  double mix_beta = 0.8;
  SamplerKind sampler = SamplerKind::cnsdiff;
  bool causal_global_kl = false;
  int threads = 0;
  int chunk = 64;  // examples buffered per parallel flush
};

struct LossBreakdown {
  double bpr = 0.0;
  double neg_sampling = 0.0;  // sampling MSE + lambda1 * causal term
  double contrastive = 0.0;
  double total = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0;
  double tau_temp = 0.0;
};

// Thrown when a batch produces a non-finite loss.
struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename T>
struct BatchStats {
  std::vector<int32_t> users;
  std::vector<std::vector<T>> used_negatives;  // the embedding fed to BPR
  std::vector<int32_t> used_negative_items;    // item id, -1 for generated
  std::vector<int> selected_steps;             // -1 for baselines
  Mat<T> item_embeddings;                      // propagated item table of this batch
};

// Runs the reverse chains for every example, in parallel, and stamps the
// elapsed wall clock. Deterministic: all noise was drawn at preparation time.
template <typename T>
void generate_batch_trajectories(const Model<T>& model, const NormGraph& graph,
                                 const StepSet& stepset, const NoiseSchedule& sched,
                                 Batch<T>& batch,
                                 const std::vector<std::vector<T>>& eps_forward,
                                 const std::vector<std::vector<std::vector<T>>>& reverse_noise,
                                 int threads) {
  const std::size_t B = batch.examples.size();
  EmbeddingState<T> in;
  in.user_table = model.user_table;
  in.item_table = model.item_table;
  EmbeddingState<T> Z = propagate(in, graph, model.dims.K, threads);
  batch.trajectories.resize(B);
  const int nthreads = resolve_threads(threads);
  (void)nthreads;
  auto t0 = std::chrono::steady_clock::now();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
  for (std::size_t i = 0; i < B; ++i) {
    const auto& ex = batch.examples[i];
    batch.trajectories[i] =
        run_reverse_trajectory(Z.item_table.row(ex.pos_item), stepset, model.dense, model.dims,
                               ex.env, sched, eps_forward[i], reverse_noise[i]);
  }
  batch.sampling_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

namespace detail {

template <typename T>
struct ExampleOut {
  T l_bpr = T(0), l_ns = T(0), l_cl = T(0);
  std::vector<T> dense_flat;
  std::vector<T> dzu, dzpos, dzrand;
  std::vector<T> used_negative;
  int selected_step = -1;
};

// Forward and hand-derived backward for one example. The trajectory states
// are sampler outputs: constants with respect to the parameters, like any
// sampled negative. Gradients are written unscaled; the caller divides by the
// batch size after reduction.
template <typename T>
void example_forward_backward(const Model<T>& model, const Mat<T>& Zu, const Mat<T>& Zv,
                              const BatchExample<T>& ex, const Trajectory<T>* tr,
                              const NoiseSchedule& sched, const std::vector<double>& prior,
                              const LossConfig& cfg, bool with_grads, ExampleOut<T>& out,
                              DenseParams<T>& scratch) {
  const ModelDims& m = model.dims;
  const std::size_t d = static_cast<std::size_t>(m.d);
  const T* zu = Zu.row(ex.user);
  const T* zpos = Zv.row(ex.pos_item);
  const T* zrand = Zv.row(ex.neg_item);
  const T l2 = static_cast<T>(cfg.lambda2);
  const T l3 = static_cast<T>(cfg.lambda3);
  const T wc = static_cast<T>(cfg.lambda2 * cfg.lambda1);

  out.dzu.assign(d, T(0));
  out.dzpos.assign(d, T(0));
  out.dzrand.assign(d, T(0));
  out.selected_step = -1;
  if (with_grads) scratch.zero();

  const bool generative = cfg.sampler == SamplerKind::cnsdiff;

  // ---- negative embedding ----
  std::vector<T> tilde(d);
  int sel_idx = -1;
  const T a = static_cast<T>(cfg.mix_alpha);
  const T b = static_cast<T>(cfg.mix_beta);
  if (generative) {
    std::vector<std::pair<int, const T*>> cands;
    cands.reserve(tr->candidate_steps.size());
    for (int t : tr->candidate_steps) cands.emplace_back(t, tr->states[t - 1].data());
    sel_idx = select_hardest(zu, d, cands);
    out.selected_step = tr->candidate_steps[sel_idx];
    mix_negative(zrand, cands[sel_idx].second, a, b, tilde.data(), d);
  } else {
    for (std::size_t i = 0; i < d; ++i) tilde[i] = zrand[i];
  }
  out.used_negative = tilde;

  // ---- BPR ----
  const T s_pos = dot(zu, zpos, d);
  const T s_neg = dot(zu, tilde.data(), d);
  out.l_bpr = bpr_loss(s_pos, s_neg);

  std::vector<T> dtilde(d, T(0));
  if (with_grads) {
    const T gd = -sigmoid(s_neg - s_pos);  // dL/ds_pos; dL/ds_neg = -gd
    for (std::size_t i = 0; i < d; ++i) {
      out.dzu[i] += gd * (zpos[i] - tilde[i]);
      out.dzpos[i] += gd * zu[i];
      dtilde[i] += -gd * zu[i];
    }
  }

  if (!generative) {
    // Baselines train plain BPR; the diffusion terms have nothing to score.
    out.l_ns = T(0);
    out.l_cl = T(0);
    if (with_grads) {
      for (std::size_t i = 0; i < d; ++i) out.dzrand[i] += dtilde[i];
      scratch.flatten_into(out.dense_flat);
    }
    return;
  }

  // ---- noise-prediction MSE ----
  std::vector<T> x_mse(d), eps_hat(d);
  NetCache<T> cache_mse;
  forward_sample(zpos, ex.t_mse, sched, ex.eps_mse.data(), x_mse.data(), d);
  denoiser_forward(model.dense, m, x_mse.data(), ex.t_mse, ex.env, eps_hat.data(), &cache_mse);
  T mse = T(0);
  for (std::size_t i = 0; i < d; ++i) {
    const T r = ex.eps_mse[i] - eps_hat[i];
    mse += r * r;
  }
  mse /= static_cast<T>(m.d);

  // ---- causal regularization over the recorded transitions ----
  std::vector<CausalPairWork<T>> works(tr->candidate_steps.size());
  T recon_total = T(0);
  std::vector<T> q_bar(m.num_envs, T(0));
  for (std::size_t pi = 0; pi < tr->candidate_steps.size(); ++pi) {
    const int t = tr->candidate_steps[pi];
    causal_pair_forward(tr->states[t].data(), tr->states[t - 1].data(), t, model.dense, m,
                        prior, sched, works[pi]);
    recon_total += works[pi].loss - works[pi].kl;
    for (int e = 0; e < m.num_envs; ++e) q_bar[e] += works[pi].q[e];
  }
  T causal = recon_total;
  if (cfg.causal_global_kl) {
    for (auto& qe : q_bar) qe /= static_cast<T>(tr->candidate_steps.size());
    causal += kl_to_prior(q_bar, prior);
  } else {
    for (const auto& w : works) causal += w.kl;
  }
  out.l_ns = mse + static_cast<T>(cfg.lambda1) * causal;

  // ---- contrastive alignment ----
  // anchor = the positive item embedding, positive = its reconstruction,
  // negatives = the example's mixed and random negatives.
  const T* z_hat0 = tr->states[0].data();
  const T inv_tau = static_cast<T>(1.0 / cfg.tau_temp);
  const T lp = dot(zpos, z_hat0, d) * inv_tau;
  const T l_1 = dot(zpos, tilde.data(), d) * inv_tau;
  const T l_2 = dot(zpos, zrand, d) * inv_tau;
  const T mx = std::max(lp, std::max(l_1, l_2));
  const T ep = std::exp(lp - mx), e1 = std::exp(l_1 - mx), e2 = std::exp(l_2 - mx);
  const T zsum = ep + e1 + e2;
  out.l_cl = mx + std::log(zsum) - lp;

  if (!with_grads) return;

  // ---- backward ----
  // Contrastive: gradients reach the anchor and, through the negatives'
  // random component, the tables. The reconstruction and the generated
  // candidate are sampler outputs.
  {
    const T pp = ep / zsum, p1 = e1 / zsum, p2 = e2 / zsum;
    const T w = l3 * inv_tau;
    for (std::size_t i = 0; i < d; ++i) {
      out.dzpos[i] += w * ((pp - T(1)) * z_hat0[i] + p1 * tilde[i] + p2 * zrand[i]);
      dtilde[i] += w * p1 * zpos[i];
      out.dzrand[i] += w * p2 * zpos[i];
    }
  }
  // Mixed negative: only the random component carries gradient.
  for (std::size_t i = 0; i < d; ++i) {
    out.dzrand[i] += a * dtilde[i];
  }
  // MSE backward into the denoiser and (through the corruption) the tables.
  {
    std::vector<T> deps(d), dxm(d, T(0));
    const T w = l2 * T(2) / static_cast<T>(m.d);
    for (std::size_t i = 0; i < d; ++i) deps[i] = w * (eps_hat[i] - ex.eps_mse[i]);
    denoiser_backward(model.dense, m, cache_mse, ex.env, deps.data(), scratch, dxm.data());
    const T sa = static_cast<T>(std::sqrt(sched.alpha_bar(ex.t_mse)));
    for (std::size_t i = 0; i < d; ++i) out.dzpos[i] += sa * dxm[i];
  }
  // Causal backward into the denoiser, env embeddings and posterior head.
  {
    std::vector<T> dq_global;
    if (cfg.causal_global_kl) {
      dq_global.resize(m.num_envs);
      const T invp = T(1) / static_cast<T>(tr->candidate_steps.size());
      for (int e = 0; e < m.num_envs; ++e) {
        const T qe = std::min(std::max(q_bar[e], static_cast<T>(1e-12)), T(1));
        const T pe = static_cast<T>(std::min(std::max(prior[e], 1e-12), 1.0));
        dq_global[e] = invp * (std::log(qe) - std::log(pe) + T(1));
      }
    }
    for (std::size_t pi = 0; pi < tr->candidate_steps.size(); ++pi) {
      const int t = tr->candidate_steps[pi];
      causal_pair_backward(tr->states[t].data(), tr->states[t - 1].data(), works[pi], wc,
                           model.dense, m, prior, sched, scratch, nullptr, nullptr,
                           cfg.causal_global_kl ? dq_global.data() : nullptr);
    }
  }

  scratch.flatten_into(out.dense_flat);
}

}  // namespace detail

// Evaluates L_BPR + lambda2 * L_neg_sampling + lambda3 * L_CL over the batch
// (arithmetic mean per term) and, when grads_out is non-null, the exact
// analytic gradient of that quantity for every parameter tensor.
//
// Per-example work runs in parallel; contributions are merged with pairwise
// summation in fixed example order, so results are bitwise reproducible for
// any thread count.
template <typename T>
LossBreakdown total_loss_and_grads(const Model<T>& model, const NormGraph& graph,
                                   const NoiseSchedule& sched,
                                   const std::vector<double>& prior, const Batch<T>& batch,
                                   const LossConfig& cfg,
                                   std::type_identity_t<Model<T>>* grads_out,
                                   std::type_identity_t<BatchStats<T>>* stats = nullptr) {
  const ModelDims& m = model.dims;
  const std::size_t d = static_cast<std::size_t>(m.d);
  const std::size_t B = batch.examples.size();
  if (B == 0) throw std::runtime_error("empty batch");
  const bool with_grads = grads_out != nullptr;
  const bool generative = cfg.sampler == SamplerKind::cnsdiff;
  if (generative && batch.trajectories.size() != B) {
    throw std::runtime_error("generative batch is missing its trajectories");
  }
  const int nthreads = resolve_threads(cfg.threads);
  (void)nthreads;

  EmbeddingState<T> in;
  in.user_table = model.user_table;
  in.item_table = model.item_table;
  EmbeddingState<T> Z = propagate(in, graph, m.K, cfg.threads);
  if (stats) {
    stats->users.clear();
    stats->used_negatives.clear();
    stats->used_negative_items.clear();
    stats->selected_steps.clear();
    stats->item_embeddings = Z.item_table;
  }

  PairwiseScalar<T> acc_bpr, acc_ns, acc_cl;
  PairwiseSum<T> acc_dense(with_grads ? model.dense.flat_size() : 0);
  struct RowGrad {
    int64_t key;  // user u, or num_users + item
    std::vector<T> g;
  };
  std::vector<RowGrad> row_grads;
  if (with_grads) row_grads.reserve(3 * B);

  const std::size_t chunk = cfg.chunk > 0 ? static_cast<std::size_t>(cfg.chunk) : 64;
  std::vector<detail::ExampleOut<T>> outs(std::min(chunk, B));
  std::vector<DenseParams<T>> scratches(std::min(chunk, B));
  for (auto& s : scratches) s.init_shapes(m);

  for (std::size_t base = 0; base < B; base += chunk) {
    const std::size_t hi = std::min(B, base + chunk);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
    for (std::size_t i = base; i < hi; ++i) {
      detail::example_forward_backward(model, Z.user_table, Z.item_table, batch.examples[i],
                                       generative ? &batch.trajectories[i] : nullptr, sched,
                                       prior, cfg, with_grads, outs[i - base],
                                       scratches[i - base]);
    }
    for (std::size_t i = base; i < hi; ++i) {
      detail::ExampleOut<T>& o = outs[i - base];
      const auto& ex = batch.examples[i];
      acc_bpr.push(o.l_bpr);
      acc_ns.push(o.l_ns);
      acc_cl.push(o.l_cl);
      if (with_grads) {
        acc_dense.push(o.dense_flat);
        row_grads.push_back({ex.user, std::move(o.dzu)});
        row_grads.push_back({static_cast<int64_t>(m.num_users) + ex.pos_item, std::move(o.dzpos)});
        row_grads.push_back({static_cast<int64_t>(m.num_users) + ex.neg_item, std::move(o.dzrand)});
      }
      if (stats) {
        stats->users.push_back(ex.user);
        stats->used_negatives.push_back(std::move(o.used_negative));
        stats->used_negative_items.push_back(generative ? -1 : ex.neg_item);
        stats->selected_steps.push_back(o.selected_step);
      }
    }
  }

  const T invB = T(1) / static_cast<T>(B);
  LossBreakdown lb;
  lb.lambda1 = cfg.lambda1;
  lb.lambda2 = cfg.lambda2;
  lb.lambda3 = cfg.lambda3;
  lb.tau_temp = cfg.tau_temp;
  lb.bpr = static_cast<double>(acc_bpr.finalize() * invB);
  lb.neg_sampling = static_cast<double>(acc_ns.finalize() * invB);
  lb.contrastive = static_cast<double>(acc_cl.finalize() * invB);
  lb.total = lb.bpr + cfg.lambda2 * lb.neg_sampling + cfg.lambda3 * lb.contrastive;
  if (!std::isfinite(lb.total)) {
    throw NumericsError("non-finite loss: bpr=" + std::to_string(lb.bpr) +
                        " neg_sampling=" + std::to_string(lb.neg_sampling) +
                        " contrastive=" + std::to_string(lb.contrastive));
  }

  if (with_grads) {
    std::vector<T> dense_sum = acc_dense.finalize();
    for (auto& x : dense_sum) x *= invB;
    grads_out->dense.add_flat(dense_sum);

    // Group row gradients by row, preserving example order within a row, and
    // reduce each run pairwise.
    std::vector<std::size_t> order(row_grads.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return row_grads[x].key < row_grads[y].key;
    });
    EmbeddingState<T> dZ;
    dZ.user_table = Mat<T>(m.num_users, d);
    dZ.item_table = Mat<T>(m.num_items, d);
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      const int64_t key = row_grads[order[i]].key;
      PairwiseSum<T> acc(d);
      while (j < order.size() && row_grads[order[j]].key == key) {
        acc.push(row_grads[order[j]].g);
        ++j;
      }
      std::vector<T> sum = acc.finalize();
      T* dst = key < m.num_users ? dZ.user_table.row(key)
                                 : dZ.item_table.row(key - m.num_users);
      for (std::size_t c = 0; c < d; ++c) dst[c] = sum[c];
      i = j;
    }
    EmbeddingState<T> dT = propagate_backward(dZ, graph, m.K, cfg.threads);
    for (std::size_t c = 0; c < dT.user_table.a.size(); ++c) {
      grads_out->user_table.a[c] += dT.user_table.a[c] * invB;
    }
    for (std::size_t c = 0; c < dT.item_table.a.size(); ++c) {
      grads_out->item_table.a[c] += dT.item_table.a[c] * invB;
    }
  }
  return lb;
}

// Loss-only evaluation (used by the finite-difference oracle and the trainer's
// diagnostics).
template <typename T>
LossBreakdown total_loss(const Model<T>& model, const NormGraph& graph,
                         const NoiseSchedule& sched, const std::vector<double>& prior,
                         const Batch<T>& batch, const LossConfig& cfg) {
  return total_loss_and_grads<T>(model, graph, sched, prior, batch, cfg, nullptr, nullptr);
}

}  // namespace cnsdiff
