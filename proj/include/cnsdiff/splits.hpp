#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cnsdiff/corpus.hpp"

namespace cnsdiff {

enum class ShiftKind { none, popularity, temporal, exposure };

std::string to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(const std::string& s);

struct SplitBundle {
  ShiftKind shift_kind = ShiftKind::none;
  uint64_t seed = 0;
  std::array<int, 3> ratios{7, 1, 2};
  double ood_fraction = 0.2;
  std::vector<int32_t> train, val, test_iid, test_ood;  // interaction indices
  // temporal mode: users with a single interaction go wholly to train
  int single_interaction_warnings = 0;
};

// Split construction for the popularity / temporal / none shifts. The OOD set
// is drawn first (inverse-popularity weighted sampling without replacement,
// or per-user latest interactions), then the remainder is split per user into
// train/val/test_iid by largest-remainder apportionment of the ratios.
SplitBundle build_split(const Dataset& dataset, ShiftKind kind,
                        std::array<int, 3> ratios, double ood_fraction,
                        uint64_t seed);

// Exposure shift: the externally supplied fully-exposed interaction list is
// the OOD test set. External pairs already present in the dataset are moved
// to OOD; unseen pairs are appended, so the returned dataset supersedes the
// input for downstream use.
struct RawInteraction {
  std::string user_id, item_id;
  int64_t timestamp = 0;
  float rating = 1.0f;
};

std::pair<Dataset, SplitBundle> build_split_exposure(
    const Dataset& dataset, const std::vector<RawInteraction>& exposure_test,
    std::array<int, 3> ratios, uint64_t seed);

void save_split(const std::string& path, const SplitBundle& bundle);
SplitBundle load_split(const std::string& path);

}  // namespace cnsdiff
