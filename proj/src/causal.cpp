#include "cnsdiff/causal.hpp"

#include <algorithm>
#include <numeric>

#include "cnsdiff/common.hpp"

namespace cnsdiff {

std::string to_string(EnvMode mode) {
  switch (mode) {
    case EnvMode::popularity_quantile: return "popularity";
    case EnvMode::timestamp_quantile: return "timestamp";
    case EnvMode::given: return "given";
  }
  return "popularity";
}

EnvMode env_mode_from_string(const std::string& s) {
  if (s == "popularity") return EnvMode::popularity_quantile;
  if (s == "timestamp") return EnvMode::timestamp_quantile;
  if (s == "given") return EnvMode::given;
  throw ConfigError("unknown env mode: " + s);
}

EnvAssignment assign_envs(const Dataset& dataset, const SplitBundle* split, EnvMode mode,
                          int num_envs, const std::vector<int32_t>* given_labels,
                          bool uniform_prior) {
  if (num_envs < 1) throw ConfigError("num_envs must be >= 1");
  EnvAssignment out;
  out.num_envs = num_envs;
  const int32_t n = static_cast<int32_t>(dataset.interactions.size());
  out.interaction_env.assign(n, 0);
  out.item_env.assign(dataset.num_items, 0);

  if (mode == EnvMode::popularity_quantile) {
    auto buckets = popularity_buckets(dataset, std::min<int>(num_envs, dataset.num_items));
    for (int32_t v = 0; v < dataset.num_items; ++v) out.item_env[v] = buckets[v];
    for (int32_t i = 0; i < n; ++i) {
      out.interaction_env[i] = out.item_env[dataset.interactions[i].item];
    }
  } else if (mode == EnvMode::timestamp_quantile) {
    std::vector<int32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
      if (dataset.interactions[a].timestamp != dataset.interactions[b].timestamp) {
        return dataset.interactions[a].timestamp < dataset.interactions[b].timestamp;
      }
      return a < b;
    });
    for (int32_t pos = 0; pos < n; ++pos) {
      out.interaction_env[order[pos]] =
          static_cast<int32_t>((static_cast<int64_t>(pos) * num_envs) / n);
    }
    // Per-item majority env, ties toward the smaller env id.
    std::vector<std::vector<int32_t>> counts(dataset.num_items,
                                             std::vector<int32_t>(num_envs, 0));
    for (int32_t i = 0; i < n; ++i) {
      counts[dataset.interactions[i].item][out.interaction_env[i]] += 1;
    }
    for (int32_t v = 0; v < dataset.num_items; ++v) {
      int best = 0;
      for (int e = 1; e < num_envs; ++e) {
        if (counts[v][e] > counts[v][best]) best = e;
      }
      out.item_env[v] = best;
    }
  } else {
    if (!given_labels) throw ConfigError("env mode 'given' requires labels");
    if (static_cast<int32_t>(given_labels->size()) != n) {
      throw ConfigError("given env labels must cover every interaction");
    }
    for (int32_t i = 0; i < n; ++i) {
      if ((*given_labels)[i] < 0 || (*given_labels)[i] >= num_envs) {
        throw ConfigError("given env label out of range");
      }
      out.interaction_env[i] = (*given_labels)[i];
    }
    std::vector<std::vector<int32_t>> counts(dataset.num_items,
                                             std::vector<int32_t>(num_envs, 0));
    for (int32_t i = 0; i < n; ++i) {
      counts[dataset.interactions[i].item][out.interaction_env[i]] += 1;
    }
    for (int32_t v = 0; v < dataset.num_items; ++v) {
      int best = 0;
      for (int e = 1; e < num_envs; ++e) {
        if (counts[v][e] > counts[v][best]) best = e;
      }
      out.item_env[v] = best;
    }
  }

  out.prior.assign(num_envs, 0.0);
  if (uniform_prior) {
    out.prior.assign(num_envs, 1.0 / num_envs);
  } else {
    int64_t total = 0;
    auto count_one = [&](int32_t idx) {
      out.prior[out.interaction_env[idx]] += 1.0;
      total += 1;
    };
    if (split) {
      for (int32_t idx : split->train) count_one(idx);
    } else {
      for (int32_t i = 0; i < n; ++i) count_one(i);
    }
    if (total == 0) {
      out.prior.assign(num_envs, 1.0 / num_envs);
    } else {
      for (auto& p : out.prior) p /= static_cast<double>(total);
    }
  }
  return out;
}

}  // namespace cnsdiff
