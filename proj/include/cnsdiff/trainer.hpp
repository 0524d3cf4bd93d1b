#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cnsdiff/causal.hpp"
#include "cnsdiff/config.hpp"
#include "cnsdiff/eval.hpp"
#include "cnsdiff/model.hpp"
#include "cnsdiff/objectives.hpp"

namespace cnsdiff {

struct EpochRecord {
  int epoch = 0;
  bool has_loss = false;
  LossBreakdown loss;  // interaction-weighted mean over the epoch's batches
  double fhns = std::numeric_limits<double>::quiet_NaN();
  bool evaluated = false;
  MetricBlock val;  // recall/ndcg @ {10, 20}, present when evaluated
  double seconds = 0.0;
  double sampling_seconds = 0.0;
};

struct RunReport {
  TrainConfig config;
  std::string version;
  int best_epoch = 0;
  std::vector<EpochRecord> records;  // epoch 0 evaluation plus one per trained epoch
  MetricBlock final_iid, final_ood;
};

// metrics.json (evaluated epochs + final blocks; no wall-clock so reruns are
// bitwise identical), epochs.csv (every epoch, includes timing), fhns.csv
void write_run_report(const std::string& dir, const RunReport& report);

// --- optimizer ----------------------------------------------------------------

enum class UpdateMask { all, denoiser_only };

template <typename T>
class Optimizer {
 public:
  void init(Model<T>& model, const TrainConfig& cfg) {
    cfg_ = cfg;
    std::size_t total = 0;
    model.for_each_param([&](const char*, std::vector<T>& t) { total += t.size(); });
    m_.assign(total, T(0));
    v_.assign(total, T(0));
    steps_ = 0;
  }

  void step(Model<T>& model, Model<T>& grads, UpdateMask mask) {
    if (cfg_.lr == 0.0) return;  // null update leaves parameters bitwise unchanged
    steps_ += 1;
    const bool adam = cfg_.optimizer == "adam";
    const T lr = static_cast<T>(cfg_.lr);
    const T b1 = static_cast<T>(cfg_.adam_beta1);
    const T b2 = static_cast<T>(cfg_.adam_beta2);
    const T eps = static_cast<T>(cfg_.adam_eps);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(steps_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(steps_)));
    std::size_t off = 0;
    auto gptr = [&grads](const char* name) {
      std::vector<T>* out = nullptr;
      grads.for_each_param([&](const char* n, std::vector<T>& t) {
        if (std::string(n) == name) out = &t;
      });
      return out;
    };
    model.for_each_param([&](const char* name, std::vector<T>& p) {
      std::vector<T>& g = *gptr(name);
      const bool frozen =
          mask == UpdateMask::denoiser_only &&
          (std::string(name) == "user_table" || std::string(name) == "item_table" ||
           std::string(name) == "posterior.wq" || std::string(name) == "posterior.bq");
      if (!frozen) {
        if (adam) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            m_[off + i] = b1 * m_[off + i] + (T(1) - b1) * g[i];
            v_[off + i] = b2 * v_[off + i] + (T(1) - b2) * g[i] * g[i];
            const T mh = m_[off + i] / bc1;
            const T vh = v_[off + i] / bc2;
            p[i] -= lr * mh / (std::sqrt(vh) + eps);
          }
        } else {
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
        }
      }
      off += p.size();
    });
  }

 private:
  TrainConfig cfg_;
  std::vector<T> m_, v_;
  int64_t steps_ = 0;
};

// --- trainer --------------------------------------------------------------------

template <typename T>
class Trainer {
 public:
  Trainer(const Dataset& dataset, const SplitBundle& split, const TrainConfig& cfg)
      : dataset_(dataset), split_(split), cfg_(cfg) {
    cfg_.validate();
    graph_ = build_graph(dataset, split);
    sched_ = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    stepset_ = make_step_set(cfg.t0, cfg_.effective_stride(), cfg.T);
    env_ = assign_envs(dataset, &split, env_mode_from_string(cfg.env_mode), cfg.num_envs,
                       nullptr, cfg.env_uniform_prior);
    ModelDims dims;
    dims.num_users = dataset.num_users;
    dims.num_items = dataset.num_items;
    dims.d = cfg.d;
    dims.hidden = cfg.hidden;
    dims.time_dim = cfg.time_dim;
    dims.env_dim = cfg.env_dim;
    dims.num_envs = cfg.num_envs;
    dims.K = cfg.K;
    model_ = init_model<T>(dims, cfg.seed);
    opt_.init(model_, cfg_);
    train_positives_ = PositiveSet::from_split(dataset, split.train);
    pop_cdf_ = popularity_cdf(dataset);
    val_gt_ = ground_truth_lists(dataset, split.val);
    iid_gt_ = ground_truth_lists(dataset, split.test_iid);
    ood_gt_ = ground_truth_lists(dataset, split.test_ood);
    std::vector<int32_t> test_all = split.test_iid;
    test_all.insert(test_all.end(), split.test_ood.begin(), split.test_ood.end());
    test_items_per_user_ = ground_truth_lists(dataset, test_all);
    sampler_kind_ = sampler_kind_from_string(cfg.sampler);
  }

  Model<T>& model() { return model_; }
  const Model<T>& model() const { return model_; }
  const NormGraph& graph() const { return graph_; }
  const EnvAssignment& env() const { return env_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const StepSet& stepset() const { return stepset_; }

  // Draws every random quantity the batch needs (negative items, diffusion
  // noise) and runs the reverse chains, so the loss below is a deterministic
  // function of (parameters, batch).
  Batch<T> prepare_batch(const std::vector<int32_t>& interaction_ids, int epoch,
                         int batch_index, const EmbeddingState<T>* dns_state) const {
    Batch<T> batch;
    batch.epoch = epoch;
    Rng srng(batch_seed(cfg_.seed, RngStream::sampler, epoch, batch_index));
    Rng nrng(batch_seed(cfg_.seed, RngStream::diffusion_noise, epoch, batch_index));
    const int t_max = stepset_.steps.back();
    const bool generative = sampler_kind_ == SamplerKind::cnsdiff;
    batch.examples.reserve(interaction_ids.size());
    std::vector<std::vector<T>> eps_forward;
    std::vector<std::vector<std::vector<T>>> reverse_noise;
    for (int32_t idx : interaction_ids) {
      const auto& r = dataset_.interactions[idx];
      BatchExample<T> ex;
      ex.user = r.user;
      ex.pos_item = r.item;
      ex.env = env_.interaction_env[idx];
      if (sampler_kind_ == SamplerKind::dns) {
        ex.neg_item = dns_sample(r.user, train_positives_, *dns_state, dataset_.num_items,
                                 1, cfg_.dns_candidates, srng)[0];
      } else if (sampler_kind_ == SamplerKind::popularity) {
        ex.neg_item =
            sample_popularity_negative(r.user, train_positives_, dataset_, pop_cdf_, srng);
      } else {
        ex.neg_item = sample_uniform_negative(r.user, train_positives_, dataset_.num_items, srng);
      }
      if (generative) {
        ex.t_mse = 1 + static_cast<int>(nrng.uniform_below(cfg_.T));
        ex.eps_mse.resize(cfg_.d);
        for (auto& x : ex.eps_mse) x = static_cast<T>(nrng.gaussian());
        std::vector<T> fwd(cfg_.d);
        for (auto& x : fwd) x = static_cast<T>(nrng.gaussian());
        eps_forward.push_back(std::move(fwd));
        std::vector<std::vector<T>> xi(t_max + 1);
        for (int t = 2; t <= t_max; ++t) {
          xi[t].resize(cfg_.d);
          for (auto& x : xi[t]) x = static_cast<T>(nrng.gaussian());
        }
        reverse_noise.push_back(std::move(xi));
      }
      batch.examples.push_back(std::move(ex));
    }
    if (generative) {
      generate_batch_trajectories(model_, graph_, stepset_, sched_, batch, eps_forward,
                                  reverse_noise, cfg_.threads);
    }
    return batch;
  }

  EpochRecord train_epoch(int epoch) {
    auto t_start = std::chrono::steady_clock::now();
    std::vector<int32_t> order = split_.train;
    {
      Rng rng(batch_seed(cfg_.seed, RngStream::shuffle, epoch, 0));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = rng.uniform_below(i);
        std::swap(order[i - 1], order[j]);
      }
    }
    LossConfig lcfg = loss_config(epoch);
    const UpdateMask mask =
        epoch <= cfg_.warmup_epochs && cfg_.warmup_epochs > 0 ? UpdateMask::denoiser_only
                                                              : UpdateMask::all;
    double sum_bpr = 0, sum_ns = 0, sum_cl = 0, sum_total = 0;
    double sampling_seconds = 0.0;
    int64_t seen = 0;
    int64_t fhns_hits = 0, fhns_total = 0;
    int batch_index = 0;
    for (std::size_t base = 0; base < order.size();
         base += static_cast<std::size_t>(cfg_.batch_size), ++batch_index) {
      const std::size_t hi =
          std::min(order.size(), base + static_cast<std::size_t>(cfg_.batch_size));
      std::vector<int32_t> ids(order.begin() + base, order.begin() + hi);
      EmbeddingState<T> dns_state;
      const EmbeddingState<T>* dns_ptr = nullptr;
      if (sampler_kind_ == SamplerKind::dns) {
        EmbeddingState<T> in;
        in.user_table = model_.user_table;
        in.item_table = model_.item_table;
        dns_state = propagate(in, graph_, cfg_.K, cfg_.threads);
        dns_ptr = &dns_state;
      }
      Batch<T> batch = prepare_batch(ids, epoch, batch_index, dns_ptr);
      Model<T> grads = zeros_like(model_);
      BatchStats<T> stats;
      LossBreakdown lb;
      try {
        lb = total_loss_and_grads(model_, graph_, sched_, env_.prior, batch, lcfg, &grads,
                                  &stats);
      } catch (const NumericsError& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index) + ": " + e.what());
      }
      opt_.step(model_, grads, mask);
      const double w = static_cast<double>(ids.size());
      sum_bpr += lb.bpr * w;
      sum_ns += lb.neg_sampling * w;
      sum_cl += lb.contrastive * w;
      sum_total += lb.total * w;
      seen += static_cast<int64_t>(ids.size());
      sampling_seconds += batch.sampling_seconds;
      {
        FhnsConfig fc{cfg_.fhns_tau_sim};
        for (std::size_t i = 0; i < stats.used_negatives.size(); ++i) {
          const auto& items = test_items_per_user_[stats.users[i]];
          fhns_total += 1;
          for (int32_t v : items) {
            if (cosine_similarity(stats.used_negatives[i].data(), stats.item_embeddings.row(v),
                                  stats.used_negatives[i].size()) > fc.tau_sim) {
              fhns_hits += 1;
              break;
            }
          }
        }
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.has_loss = seen > 0;
    if (seen > 0) {
      rec.loss.bpr = sum_bpr / static_cast<double>(seen);
      rec.loss.neg_sampling = sum_ns / static_cast<double>(seen);
      rec.loss.contrastive = sum_cl / static_cast<double>(seen);
      rec.loss.total = sum_total / static_cast<double>(seen);
      rec.loss.lambda1 = cfg_.lambda1;
      rec.loss.lambda2 = cfg_.lambda2;
      rec.loss.lambda3 = cfg_.lambda3;
      rec.loss.tau_temp = cfg_.tau_temp;
    }
    if (fhns_total > 0) {
      rec.fhns = static_cast<double>(fhns_hits) / static_cast<double>(fhns_total);
    }
    rec.sampling_seconds = sampling_seconds;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
  }

  MetricBlock evaluate(const std::vector<std::vector<int32_t>>& gt) const {
    EmbeddingState<T> in;
    in.user_table = model_.user_table;
    in.item_table = model_.item_table;
    EmbeddingState<T> Z = propagate(in, graph_, cfg_.K, cfg_.threads);
    return rank_metrics(Z, gt, train_positives_, {10, 20}, cfg_.threads);
  }

  RunReport fit(const std::string& checkpoint_dir = "") {
    RunReport report;
    report.config = cfg_;
    double best_recall20 = -1.0;
    Model<T> best_model = model_;
    int best_epoch = 0;

    auto evaluate_into = [&](int epoch, EpochRecord& rec) {
      rec.evaluated = true;
      rec.val = evaluate(val_gt_);
      const double r20 = rec.val.recall[1];
      if (r20 > best_recall20) {
        best_recall20 = r20;
        best_model = model_;
        best_epoch = epoch;
      }
      if (!checkpoint_dir.empty()) save_model_checkpoint(checkpoint_dir, epoch);
    };

    {
      EpochRecord rec0;
      rec0.epoch = 0;
      evaluate_into(0, rec0);
      report.records.push_back(std::move(rec0));
    }
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      EpochRecord rec = train_epoch(epoch);
      if (epoch % cfg_.eval_every == 0 || epoch == cfg_.epochs) {
        evaluate_into(epoch, rec);
      }
      report.records.push_back(std::move(rec));
    }
    report.best_epoch = best_epoch;

    // Final metrics come from the best-validation checkpoint.
    std::swap(model_, best_model);
    report.final_iid = evaluate(iid_gt_);
    report.final_ood = evaluate(ood_gt_);
    std::swap(model_, best_model);
    final_model_ = std::move(best_model);
    return report;
  }

  const Model<T>& best_model() const { return final_model_; }

  void save_model_checkpoint(const std::string& dir, int epoch) {
    if constexpr (std::is_same_v<T, float>) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%05d.ckpt", epoch);
      save_checkpoint(dir + "/" + name, model_, cfg_.seed, epoch);
    }
  }

  LossConfig loss_config(int epoch) const {
    LossConfig lcfg;
    lcfg.lambda1 = cfg_.lambda1;
    lcfg.lambda2 = cfg_.lambda2;
    lcfg.lambda3 = cfg_.lambda3;
    lcfg.tau_temp = cfg_.tau_temp;
    MixSchedule ms{cfg_.mix_initial[0], cfg_.mix_initial[1], cfg_.mix_final[0],
                   cfg_.mix_final[1], cfg_.epochs};
    auto [a, b] = mix_weights_at(ms, epoch);
    lcfg.mix_alpha = a;
    lcfg.mix_beta = b;
    lcfg.sampler = sampler_kind_;
    lcfg.causal_global_kl = cfg_.causal_global_kl;
    lcfg.threads = cfg_.threads;
    return lcfg;
  }

 private:
  const Dataset& dataset_;
  const SplitBundle& split_;
  TrainConfig cfg_;
  NormGraph graph_;
  NoiseSchedule sched_;
  StepSet stepset_;
  EnvAssignment env_;
  Model<T> model_;
  Model<T> final_model_;
  Optimizer<T> opt_;
  PositiveSet train_positives_;
  std::vector<double> pop_cdf_;
  std::vector<std::vector<int32_t>> val_gt_, iid_gt_, ood_gt_, test_items_per_user_;
  SamplerKind sampler_kind_;
};

}  // namespace cnsdiff
