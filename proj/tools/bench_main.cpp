// Serial-vs-OpenMP benchmark over the three hot kernels: graph propagation,
// full-ranking evaluation, and the batched loss/gradient computation.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "cnsdiff/corpus.hpp"
#include "cnsdiff/gradcheck.hpp"
#include "cnsdiff/splits.hpp"
#include "cnsdiff/trainer.hpp"

using namespace cnsdiff;

namespace {

double time_once(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) best = std::min(best, time_once(fn));
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int users = 600, items = 600, threads = 0;
  if (argc > 1) users = items = std::atoi(argv[1]);
  if (argc > 2) threads = std::atoi(argv[2]);

  SyntheticSpec spec;
  spec.num_users = users;
  spec.num_items = items;
  spec.num_envs = 4;
  spec.preference_rank = 6;
  spec.preference_keep_frac = 0.08;
  spec.seed = 11;
  spec.env_probs = {0.4, 0.3, 0.2, 0.1};
  spec = make_item_affinity_spec(spec, 0.9, 0.2, 11);
  auto [dataset, gt] = generate_synthetic(spec);
  SplitBundle split = build_split(dataset, ShiftKind::popularity, {7, 1, 2}, 0.2, 3);

  TrainConfig cfg;
  cfg.d = 64;
  cfg.hidden = 64;
  cfg.T = 20;
  cfg.batch_size = 512;
  cfg.threads = threads;
  cfg.epochs = 1;
  Trainer<float> trainer(dataset, split, cfg);

  std::printf("workload: M=N=%d, %zu interactions, train=%zu, d=%d, T=%d\n", users,
              dataset.interactions.size(), split.train.size(), cfg.d, cfg.T);
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial (s)", "openmp (s)", "speedup");

  EmbeddingState<float> state;
  state.user_table = trainer.model().user_table;
  state.item_table = trainer.model().item_table;
  const NormGraph& graph = trainer.graph();

  {
    double ts = best_of(3, [&] { propagate_serial(state, graph, cfg.K); });
    double tp = best_of(3, [&] { propagate(state, graph, cfg.K, threads); });
    std::printf("%-28s %12.4f %12.4f %7.2fx\n", "propagate (K=3)", ts, tp, ts / tp);
  }
  {
    EmbeddingState<float> Z = propagate(state, graph, cfg.K, threads);
    auto gt_lists = ground_truth_lists(dataset, split.test_iid);
    PositiveSet mask = PositiveSet::from_split(dataset, split.train);
    double ts = best_of(3, [&] { rank_metrics_serial(Z, gt_lists, mask, {10, 20}); });
    double tp = best_of(3, [&] { rank_metrics(Z, gt_lists, mask, {10, 20}, threads); });
    std::printf("%-28s %12.4f %12.4f %7.2fx\n", "rank_metrics (full sort)", ts, tp, ts / tp);
  }
  {
    std::vector<int32_t> ids(split.train.begin(),
                             split.train.begin() + std::min<std::size_t>(split.train.size(), 512));
    Batch<float> batch = trainer.prepare_batch(ids, 1, 0, nullptr);
    LossConfig lcfg = trainer.loss_config(1);
    Model<float>& model = trainer.model();
    double ts = best_of(3, [&] {
      LossConfig c = lcfg;
      c.threads = 1;
      Model<float> g = zeros_like(model);
      total_loss_and_grads(model, graph, trainer.schedule(), trainer.env().prior, batch, c,
                           &g);
    });
    double tp = best_of(3, [&] {
      LossConfig c = lcfg;
      c.threads = threads;
      Model<float> g = zeros_like(model);
      total_loss_and_grads(model, graph, trainer.schedule(), trainer.env().prior, batch, c,
                           &g);
    });
    std::printf("%-28s %12.4f %12.4f %7.2fx\n", "batch loss+grads (B=512)", ts, tp, ts / tp);
  }
  return 0;
}
