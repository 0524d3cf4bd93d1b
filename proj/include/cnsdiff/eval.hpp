#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <unordered_set>
#include <vector>

#include "cnsdiff/common.hpp"
#include "cnsdiff/encoder.hpp"
#include "cnsdiff/sampler.hpp"

namespace cnsdiff {

struct MetricBlock {
  std::vector<int> ks;
  std::vector<double> recall;  // aligned with ks
  std::vector<double> ndcg;
  int64_t num_evaluated_users = 0;
};

inline std::vector<std::vector<int32_t>> ground_truth_lists(const Dataset& dataset,
                                                            const std::vector<int32_t>& indices) {
  std::vector<std::unordered_set<int32_t>> sets(dataset.num_users);
  for (int32_t idx : indices) {
    const auto& r = dataset.interactions[idx];
    sets[r.user].insert(r.item);
  }
  std::vector<std::vector<int32_t>> out(dataset.num_users);
  for (int32_t u = 0; u < dataset.num_users; ++u) {
    out[u].assign(sets[u].begin(), sets[u].end());
    std::sort(out[u].begin(), out[u].end());
  }
  return out;
}

namespace detail {

inline double dcg_gain(int rank_1based) { return 1.0 / std::log2(rank_1based + 1.0); }

// Ranked prefix (top k_max) of all non-masked items: score descending, item
// index ascending on ties.
template <typename T>
void top_k_items(const EmbeddingState<T>& state, int32_t u,
                 const std::unordered_set<int32_t>& masked, int k_max,
                 std::vector<int32_t>& out) {
  const int32_t n = static_cast<int32_t>(state.item_table.rows);
  const std::size_t d = state.dim();
  const T* zu = state.user_table.row(u);
  std::vector<std::pair<T, int32_t>> scored;
  scored.reserve(n);
  for (int32_t v = 0; v < n; ++v) {
    if (masked.count(v)) continue;
    scored.emplace_back(dot(zu, state.item_table.row(v), d), v);
  }
  auto cmp = [](const std::pair<T, int32_t>& a, const std::pair<T, int32_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  const std::size_t k = std::min<std::size_t>(k_max, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), cmp);
  out.clear();
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
}

struct UserMetrics {
  bool evaluated = false;
  std::vector<double> recall, ndcg;
};

inline void metrics_from_ranking(const std::vector<int32_t>& top,
                                 const std::unordered_set<int32_t>& gt,
                                 const std::vector<int>& ks, UserMetrics& um) {
  um.evaluated = true;
  um.recall.assign(ks.size(), 0.0);
  um.ndcg.assign(ks.size(), 0.0);
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    const int k = ks[ki];
    int hits = 0;
    double dcg = 0.0;
    for (int r = 0; r < k && r < static_cast<int>(top.size()); ++r) {
      if (gt.count(top[r])) {
        hits += 1;
        dcg += dcg_gain(r + 1);
      }
    }
    double idcg = 0.0;
    const int ideal = std::min<int>(k, static_cast<int>(gt.size()));
    for (int r = 1; r <= ideal; ++r) idcg += dcg_gain(r);
    um.recall[ki] = static_cast<double>(hits) / static_cast<double>(gt.size());
    um.ndcg[ki] = idcg > 0.0 ? dcg / idcg : 0.0;
  }
}

}  // namespace detail

// Full-ranking Recall@K / NDCG@K. The candidate universe is every item except
// the user's masked (train) items; users with empty ground truth are excluded
// from the means. Per-user work is parallel; the reduction runs in user order.
template <typename T>
MetricBlock rank_metrics(const EmbeddingState<T>& state,
                         const std::vector<std::vector<int32_t>>& ground_truth,
                         const PositiveSet& mask, const std::vector<int>& ks,
                         int threads = 0) {
  const int32_t M = static_cast<int32_t>(state.user_table.rows);
  const int k_max = *std::max_element(ks.begin(), ks.end());
  std::vector<detail::UserMetrics> per_user(M);
  const int nthreads = resolve_threads(threads);
  (void)nthreads;
#ifdef _OPENMP
#pragma omp parallel num_threads(nthreads)
#endif
  {
    std::vector<int32_t> top;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int32_t u = 0; u < M; ++u) {
      if (ground_truth[u].empty()) continue;
      std::unordered_set<int32_t> gt(ground_truth[u].begin(), ground_truth[u].end());
      detail::top_k_items(state, u, mask.items[u], k_max, top);
      detail::metrics_from_ranking(top, gt, ks, per_user[u]);
    }
  }
  MetricBlock mb;
  mb.ks = ks;
  mb.recall.assign(ks.size(), 0.0);
  mb.ndcg.assign(ks.size(), 0.0);
  for (int32_t u = 0; u < M; ++u) {
    if (!per_user[u].evaluated) continue;
    mb.num_evaluated_users += 1;
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      mb.recall[ki] += per_user[u].recall[ki];
      mb.ndcg[ki] += per_user[u].ndcg[ki];
    }
  }
  if (mb.num_evaluated_users > 0) {
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      mb.recall[ki] /= static_cast<double>(mb.num_evaluated_users);
      mb.ndcg[ki] /= static_cast<double>(mb.num_evaluated_users);
    }
  }
  return mb;
}

template <typename T>
MetricBlock rank_metrics_serial(const EmbeddingState<T>& state,
                                const std::vector<std::vector<int32_t>>& ground_truth,
                                const PositiveSet& mask, const std::vector<int>& ks) {
  return rank_metrics(state, ground_truth, mask, ks, 1);
}

// --- false-hard-negative diagnostic ------------------------------------------

struct FhnsConfig {
  double tau_sim = 0.99;
};

template <typename T>
double cosine_similarity(const T* a, const T* b, std::size_t d) {
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
    ab += static_cast<double>(a[i]) * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;  // zero vectors have similarity 0
  return ab / (std::sqrt(na) * std::sqrt(nb));
}

// Fraction of sampled/generated negatives whose cosine similarity to any of
// the owning user's test items exceeds tau_sim.
template <typename T>
double fhns_ratio(const std::vector<std::vector<T>>& negatives,
                  const std::vector<int32_t>& users, const Mat<T>& item_embeddings,
                  const std::vector<std::vector<int32_t>>& test_items_per_user,
                  const FhnsConfig& cfg) {
  if (negatives.empty()) throw std::runtime_error("fhns_ratio: empty negative list");
  int64_t count = 0;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const auto& items = test_items_per_user[users[i]];
    const std::size_t d = negatives[i].size();
    for (int32_t v : items) {
      if (cosine_similarity(negatives[i].data(), item_embeddings.row(v), d) > cfg.tau_sim) {
        count += 1;
        break;
      }
    }
  }
  return static_cast<double>(count) / static_cast<double>(negatives.size());
}

// --- grouped diagnostics ------------------------------------------------------

struct GroupedReport {
  int num_groups = 0;
  std::vector<MetricBlock> metrics;     // per group
  std::vector<int64_t> gt_support;      // ground-truth items per group
  std::vector<double> fhns;             // per group, NaN when unattributed
  std::vector<int64_t> fhns_support;    // negatives attributed per group
};

// Metrics per item group: each user's ground truth is restricted to the
// group's items against the same full ranking. Generated negatives are
// attributed to the group of their most similar item.
template <typename T>
GroupedReport grouped_report(const EmbeddingState<T>& state,
                             const std::vector<std::vector<int32_t>>& ground_truth,
                             const PositiveSet& mask, const std::vector<int>& ks,
                             const std::vector<int32_t>& item_group, int num_groups,
                             const std::type_identity_t<std::vector<std::vector<T>>>* negatives,
                             const std::vector<int32_t>* neg_users,
                             const std::vector<int32_t>* neg_items,
                             const std::vector<std::vector<int32_t>>* test_items_per_user,
                             const FhnsConfig& fhns_cfg, int threads = 0) {
  const int32_t M = static_cast<int32_t>(state.user_table.rows);
  for (int32_t g : item_group) {
    if (g < 0 || g >= num_groups) throw std::runtime_error("unknown group id in item_group");
  }
  const int k_max = *std::max_element(ks.begin(), ks.end());
  GroupedReport rep;
  rep.num_groups = num_groups;
  rep.gt_support.assign(num_groups, 0);

  struct PerUserPerGroup {
    std::vector<detail::UserMetrics> by_group;
  };
  std::vector<PerUserPerGroup> per_user(M);
  const int nthreads = resolve_threads(threads);
  (void)nthreads;
#ifdef _OPENMP
#pragma omp parallel num_threads(nthreads)
#endif
  {
    std::vector<int32_t> top;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int32_t u = 0; u < M; ++u) {
      if (ground_truth[u].empty()) continue;
      detail::top_k_items(state, u, mask.items[u], k_max, top);
      per_user[u].by_group.resize(num_groups);
      for (int g = 0; g < num_groups; ++g) {
        std::unordered_set<int32_t> gt;
        for (int32_t v : ground_truth[u]) {
          if (item_group[v] == g) gt.insert(v);
        }
        if (gt.empty()) continue;
        detail::metrics_from_ranking(top, gt, ks, per_user[u].by_group[g]);
      }
    }
  }
  for (int g = 0; g < num_groups; ++g) {
    MetricBlock mb;
    mb.ks = ks;
    mb.recall.assign(ks.size(), 0.0);
    mb.ndcg.assign(ks.size(), 0.0);
    rep.metrics.push_back(mb);
  }
  for (int32_t u = 0; u < M; ++u) {
    for (int32_t v : ground_truth[u]) rep.gt_support[item_group[v]] += 1;
    if (per_user[u].by_group.empty()) continue;
    for (int g = 0; g < num_groups; ++g) {
      const auto& um = per_user[u].by_group[g];
      if (!um.evaluated) continue;
      rep.metrics[g].num_evaluated_users += 1;
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        rep.metrics[g].recall[ki] += um.recall[ki];
        rep.metrics[g].ndcg[ki] += um.ndcg[ki];
      }
    }
  }
  for (int g = 0; g < num_groups; ++g) {
    auto& mb = rep.metrics[g];
    if (mb.num_evaluated_users > 0) {
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        mb.recall[ki] /= static_cast<double>(mb.num_evaluated_users);
        mb.ndcg[ki] /= static_cast<double>(mb.num_evaluated_users);
      }
    }
  }

  rep.fhns.assign(num_groups, std::numeric_limits<double>::quiet_NaN());
  rep.fhns_support.assign(num_groups, 0);
  if (negatives && neg_users && test_items_per_user) {
    const std::size_t d = state.dim();
    std::vector<int64_t> counted(num_groups, 0);
    for (std::size_t i = 0; i < negatives->size(); ++i) {
      int32_t attributed;
      if (neg_items && (*neg_items)[i] >= 0) {
        attributed = (*neg_items)[i];
      } else {
        // nearest item by cosine
        double best = -2.0;
        attributed = 0;
        for (int32_t v = 0; v < static_cast<int32_t>(state.item_table.rows); ++v) {
          double c = cosine_similarity((*negatives)[i].data(), state.item_table.row(v), d);
          if (c > best) {
            best = c;
            attributed = v;
          }
        }
      }
      const int g = item_group[attributed];
      rep.fhns_support[g] += 1;
      const auto& items = (*test_items_per_user)[(*neg_users)[i]];
      for (int32_t v : items) {
        if (cosine_similarity((*negatives)[i].data(), state.item_table.row(v), d) >
            fhns_cfg.tau_sim) {
          counted[g] += 1;
          break;
        }
      }
    }
    for (int g = 0; g < num_groups; ++g) {
      if (rep.fhns_support[g] > 0) {
        rep.fhns[g] = static_cast<double>(counted[g]) / static_cast<double>(rep.fhns_support[g]);
      }
    }
  }
  return rep;
}

}  // namespace cnsdiff
