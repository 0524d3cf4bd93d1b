#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cnsdiff/common.hpp"
#include "cnsdiff/corpus.hpp"
#include "cnsdiff/encoder.hpp"
#include "cnsdiff/rng.hpp"

namespace cnsdiff {

enum class SamplerKind { random_uniform, popularity, dns, cnsdiff };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& s);

// Per-user positive set with O(1) membership tests.
struct PositiveSet {
  std::vector<std::unordered_set<int32_t>> items;  // per user

  static PositiveSet from_split(const Dataset& dataset, const std::vector<int32_t>& indices) {
    PositiveSet p;
    p.items.resize(dataset.num_users);
    for (int32_t idx : indices) {
      const auto& r = dataset.interactions[idx];
      p.items[r.user].insert(r.item);
    }
    return p;
  }
  bool contains(int32_t u, int32_t v) const { return items[u].count(v) != 0; }
  std::size_t count(int32_t u) const { return items[u].size(); }
};

// Uniform draw over the user's non-interacted items. Rejection sampling with
// a deterministic exhaustive fallback when the positive set is dense.
int32_t sample_uniform_negative(int32_t u, const PositiveSet& positives, int32_t num_items,
                                Rng& rng);

// Draw proportional to global item popularity over non-interacted items.
int32_t sample_popularity_negative(int32_t u, const PositiveSet& positives,
                                   const Dataset& dataset,
                                   const std::vector<double>& popularity_cdf, Rng& rng);

std::vector<double> popularity_cdf(const Dataset& dataset);

// DNS(M, N): N_cand uniform candidates, ranked by score against the user.
// Returns the top-M item indices, best first; ties toward the smaller index.
template <typename T>
std::vector<int32_t> dns_sample(int32_t u, const PositiveSet& positives,
                                const EmbeddingState<T>& state, int32_t num_items, int top_m,
                                int num_candidates, Rng& rng) {
  if (positives.count(u) >= static_cast<std::size_t>(num_items)) {
    throw std::runtime_error("user has interacted with every item");
  }
  std::vector<int32_t> cands;
  cands.reserve(num_candidates);
  for (int k = 0; k < num_candidates; ++k) {
    cands.push_back(sample_uniform_negative(u, positives, num_items, rng));
  }
  std::vector<std::pair<T, int32_t>> scored;
  scored.reserve(cands.size());
  for (int32_t v : cands) scored.emplace_back(score(state, u, v), v);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int32_t> out;
  for (int k = 0; k < top_m && k < static_cast<int>(scored.size()); ++k) {
    out.push_back(scored[k].second);
  }
  return out;
}

// Single-negative facade over the three baseline strategies.
template <typename T>
int32_t baseline_sample(SamplerKind kind, int32_t u, const PositiveSet& positives,
                        const EmbeddingState<T>& state, const Dataset& dataset,
                        const std::vector<double>& pop_cdf, int num_candidates, Rng& rng) {
  switch (kind) {
    case SamplerKind::random_uniform:
    case SamplerKind::cnsdiff:
      return sample_uniform_negative(u, positives, dataset.num_items, rng);
    case SamplerKind::popularity:
      return sample_popularity_negative(u, positives, dataset, pop_cdf, rng);
    case SamplerKind::dns:
      return dns_sample(u, positives, state, dataset.num_items, 1, num_candidates, rng)[0];
  }
  throw ConfigError("unknown sampler kind");
}

// Hardest generated candidate by inner product with the user embedding.
// Ties break toward the smaller diffusion step (the harder candidate).
template <typename T>
int select_hardest(const T* z_u, std::size_t d,
                   const std::vector<std::pair<int, const T*>>& candidates) {
  if (candidates.empty()) throw std::runtime_error("select_hardest: empty candidate list");
  int best = 0;
  T best_score = dot(z_u, candidates[0].second, d);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const T s = dot(z_u, candidates[i].second, d);
    if (s > best_score ||
        (s == best_score && candidates[i].first < candidates[best].first)) {
      best = static_cast<int>(i);
      best_score = s;
    }
  }
  return best;
}

// --- mixup curriculum --------------------------------------------------------

struct MixSchedule {
  double initial_alpha = 2.0, initial_beta = 8.0;
  double final_alpha = 9.0, final_beta = 1.0;
  int total_epochs = 1;
};

// Linear interpolation between the normalized endpoints; returns (alpha, beta)
// with alpha + beta = 1.
inline std::pair<double, double> mix_weights_at(const MixSchedule& sched, int epoch) {
  const double ia = sched.initial_alpha / (sched.initial_alpha + sched.initial_beta);
  const double fa = sched.final_alpha / (sched.final_alpha + sched.final_beta);
  double w = sched.total_epochs <= 0
                 ? 0.0
                 : static_cast<double>(epoch) / static_cast<double>(sched.total_epochs);
  w = std::clamp(w, 0.0, 1.0);
  const double a = (1.0 - w) * ia + w * fa;
  return {a, 1.0 - a};
}

template <typename T>
void mix_negative(const T* e_r, const T* e_h, T alpha, T beta, T* out, std::size_t d) {
  for (std::size_t i = 0; i < d; ++i) out[i] = alpha * e_r[i] + beta * e_h[i];
}

}  // namespace cnsdiff
