#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cnsdiff/tensor.hpp"

namespace cnsdiff {

struct Interaction {
  int32_t user = 0;
  int32_t item = 0;
  int64_t timestamp = 0;
  float rating = 1.0f;
};

struct Dataset {
  int32_t num_users = 0;
  int32_t num_items = 0;
  std::vector<Interaction> interactions;
  std::vector<int64_t> item_popularity;  // interaction count per item
  std::vector<std::string> user_ids;     // dense index -> original id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int32_t> user_index;
  std::unordered_map<std::string, int32_t> item_index;

  void recount_popularity();
};

// Maps the required logical columns onto whatever the file calls them.
struct LoadSchema {
  std::string user_col = "user_id";
  std::string item_col = "item_id";
  std::string time_col = "timestamp";
  std::string rating_col = "rating";
};

// CSV ingestion: rating filter, duplicate (user,item) collapse to the latest
// timestamp, then iterative removal of users/items below their interaction
// floors until both are stable, then dense 0-based reindexing in order of
// first appearance.
Dataset load_interactions(const std::string& path, const LoadSchema& schema,
                          int min_user_interactions, int min_item_interactions,
                          double rating_threshold);

// Equal-frequency buckets on item popularity, ties broken by item index.
// Bucket 0 holds the most popular items.
std::vector<int32_t> popularity_buckets(const Dataset& dataset, int num_buckets);

// ---------------------------------------------------------------------------
// Synthetic confounded data: a planted low-rank preference model where an
// interaction is observed only if the per-pair environment draw exposes the
// item. Preferred-but-unexposed pairs are the planted false negatives.

struct SyntheticSpec {
  int32_t num_users = 200;
  int32_t num_items = 200;
  int num_envs = 2;
  int preference_rank = 4;
  double preference_keep_frac = 0.1;  // fraction of (u,v) pairs planted as preferred
  std::vector<double> env_probs;      // per-interaction env distribution (empty = uniform)
  Mat<double> exposure;               // num_items x num_envs, phi(v,e) in (0,1]
  std::vector<int> item_affinity;     // item -> favored env, -1 when not applicable
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError on violated bounds
};

// Compact exposure parametrizations expanded into the full phi matrix.
SyntheticSpec make_uniform_exposure_spec(SyntheticSpec base, const std::vector<double>& phi_per_env);
SyntheticSpec make_target_fnr_spec(SyntheticSpec base, const std::vector<double>& eta_per_env);
SyntheticSpec make_item_affinity_spec(SyntheticSpec base, double phi_favored, double phi_other,
                                      uint64_t affinity_seed);

struct GroundTruth {
  Mat<float> preference_score;  // planted scores, num_users x num_items
  std::vector<uint8_t> preferred;  // row-major bools, score >= threshold
  double threshold = 0.0;
  std::vector<int> item_affinity;
  std::vector<double> eta_hat;  // realized per-env false-negative rate
  std::vector<int64_t> preferred_per_env;
  std::vector<int64_t> unexposed_per_env;

  bool is_preferred(int32_t u, int32_t v) const {
    return preferred[static_cast<std::size_t>(u) * preference_score.cols + v] != 0;
  }
};

std::pair<Dataset, GroundTruth> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// On-disk dataset directory: dataset.json + interactions.csv + id lists.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);
void save_ground_truth(const std::string& dir, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::string& dir);

}  // namespace cnsdiff
