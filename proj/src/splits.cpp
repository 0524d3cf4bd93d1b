#include "cnsdiff/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cnsdiff/common.hpp"
#include "cnsdiff/rng.hpp"

using json = nlohmann::json;

namespace cnsdiff {

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::none: return "none";
    case ShiftKind::popularity: return "popularity";
    case ShiftKind::temporal: return "temporal";
    case ShiftKind::exposure: return "exposure";
  }
  return "none";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "none") return ShiftKind::none;
  if (s == "popularity") return ShiftKind::popularity;
  if (s == "temporal") return ShiftKind::temporal;
  if (s == "exposure") return ShiftKind::exposure;
  throw ConfigError("unknown shift kind: " + s);
}

namespace {

// Largest-remainder apportionment of n into |ratios| parts.
std::array<int64_t, 3> apportion(int64_t n, const std::array<int, 3>& ratios) {
  const double total = static_cast<double>(ratios[0] + ratios[1] + ratios[2]);
  std::array<int64_t, 3> base{};
  std::array<double, 3> frac{};
  int64_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double q = static_cast<double>(n) * ratios[s] / total;
    base[s] = static_cast<int64_t>(std::floor(q));
    frac[s] = q - static_cast<double>(base[s]);
    assigned += base[s];
  }
  int64_t left = n - assigned;
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (int k = 0; k < 3 && left > 0; ++k, --left) base[order[k]] += 1;
  return base;
}

// Shuffle + apportion one user's remainder indices into the three IID splits.
void split_remainder_per_user(std::vector<int32_t>& indices, Rng& rng,
                              const std::array<int, 3>& ratios,
                              SplitBundle& out) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    std::size_t j = rng.uniform_below(i);
    std::swap(indices[i - 1], indices[j]);
  }
  auto counts = apportion(static_cast<int64_t>(indices.size()), ratios);
  std::size_t pos = 0;
  for (int64_t k = 0; k < counts[0]; ++k) out.train.push_back(indices[pos++]);
  for (int64_t k = 0; k < counts[1]; ++k) out.val.push_back(indices[pos++]);
  for (int64_t k = 0; k < counts[2]; ++k) out.test_iid.push_back(indices[pos++]);
}

std::vector<std::vector<int32_t>> group_by_user(const Dataset& dataset,
                                                const std::vector<char>& in_remainder) {
  std::vector<std::vector<int32_t>> per_user(dataset.num_users);
  for (int32_t i = 0; i < static_cast<int32_t>(dataset.interactions.size()); ++i) {
    if (in_remainder[i]) per_user[dataset.interactions[i].user].push_back(i);
  }
  return per_user;
}

void split_remainder(const Dataset& dataset, const std::vector<char>& in_remainder,
                     uint64_t seed, SplitBundle& out) {
  Rng rng(stream_seed(seed, RngStream::shuffle));
  auto per_user = group_by_user(dataset, in_remainder);
  for (auto& indices : per_user) {
    if (!indices.empty()) split_remainder_per_user(indices, rng, out.ratios, out);
  }
}

}  // namespace

SplitBundle build_split(const Dataset& dataset, ShiftKind kind,
                        std::array<int, 3> ratios, double ood_fraction,
                        uint64_t seed) {
  if (dataset.interactions.empty()) throw std::runtime_error("cannot split an empty dataset");
  if (kind == ShiftKind::exposure) {
    throw ConfigError("exposure splits require an external interaction list; "
                      "use build_split_exposure");
  }
  if (ood_fraction < 0.0 || ood_fraction >= 1.0) {
    throw ConfigError("ood_fraction must be in [0,1)");
  }
  SplitBundle out;
  out.shift_kind = kind;
  out.seed = seed;
  out.ratios = ratios;
  out.ood_fraction = ood_fraction;

  const int32_t n = static_cast<int32_t>(dataset.interactions.size());
  std::vector<char> in_remainder(n, 1);

  if (kind == ShiftKind::popularity && ood_fraction > 0.0) {
    // Weighted sampling without replacement via exponential sort keys
    // (Efraimidis-Spirakis): smallest -log(U)/w first. Inverse-popularity
    // weights flatten the OOD item-popularity histogram.
    const int64_t n_ood = static_cast<int64_t>(
        std::ceil(ood_fraction * static_cast<double>(n)));
    Rng rng(stream_seed(seed, RngStream::sampler));
    std::vector<std::pair<double, int32_t>> keys(n);
    for (int32_t i = 0; i < n; ++i) {
      double w = 1.0 / static_cast<double>(
                           std::max<int64_t>(1, dataset.item_popularity[dataset.interactions[i].item]));
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      keys[i] = {-std::log(u) / w, i};
    }
    std::sort(keys.begin(), keys.end());
    for (int64_t k = 0; k < n_ood && k < n; ++k) {
      out.test_ood.push_back(keys[k].second);
      in_remainder[keys[k].second] = 0;
    }
    std::sort(out.test_ood.begin(), out.test_ood.end());
  } else if (kind == ShiftKind::temporal && ood_fraction > 0.0) {
    std::vector<std::vector<int32_t>> per_user(dataset.num_users);
    for (int32_t i = 0; i < n; ++i) per_user[dataset.interactions[i].user].push_back(i);
    for (auto& indices : per_user) {
      if (indices.empty()) continue;
      if (indices.size() < 2) {
        out.single_interaction_warnings += 1;
        continue;  // stays in the remainder; apportionment sends it to train
      }
      std::stable_sort(indices.begin(), indices.end(), [&](int32_t a, int32_t b) {
        if (dataset.interactions[a].timestamp != dataset.interactions[b].timestamp) {
          return dataset.interactions[a].timestamp < dataset.interactions[b].timestamp;
        }
        return a < b;
      });
      std::size_t k = static_cast<std::size_t>(
          std::ceil(ood_fraction * static_cast<double>(indices.size())));
      k = std::min(k, indices.size() - 1);
      for (std::size_t j = indices.size() - k; j < indices.size(); ++j) {
        out.test_ood.push_back(indices[j]);
        in_remainder[indices[j]] = 0;
      }
    }
    std::sort(out.test_ood.begin(), out.test_ood.end());
  }

  split_remainder(dataset, in_remainder, seed, out);
  return out;
}

std::pair<Dataset, SplitBundle> build_split_exposure(
    const Dataset& dataset, const std::vector<RawInteraction>& exposure_test,
    std::array<int, 3> ratios, uint64_t seed) {
  if (dataset.interactions.empty()) throw std::runtime_error("cannot split an empty dataset");
  if (exposure_test.empty()) {
    throw ConfigError("exposure split requires a nonempty exposure_test list");
  }
  Dataset merged = dataset;
  SplitBundle out;
  out.shift_kind = ShiftKind::exposure;
  out.seed = seed;
  out.ratios = ratios;
  out.ood_fraction = 0.0;

  // Pair -> existing interaction indices.
  std::unordered_map<int64_t, std::vector<int32_t>> pair_index;
  for (int32_t i = 0; i < static_cast<int32_t>(merged.interactions.size()); ++i) {
    const auto& r = merged.interactions[i];
    pair_index[(static_cast<int64_t>(r.user) << 32) | static_cast<uint32_t>(r.item)].push_back(i);
  }

  std::vector<char> in_remainder(merged.interactions.size(), 1);
  for (const auto& raw : exposure_test) {
    auto uit = merged.user_index.find(raw.user_id);
    auto iit = merged.item_index.find(raw.item_id);
    if (uit == merged.user_index.end() || iit == merged.item_index.end()) {
      throw std::runtime_error("exposure_test references unknown id: (" + raw.user_id + ", " +
                               raw.item_id + ")");
    }
    int64_t key = (static_cast<int64_t>(uit->second) << 32) | static_cast<uint32_t>(iit->second);
    auto hit = pair_index.find(key);
    if (hit != pair_index.end()) {
      for (int32_t idx : hit->second) {
        if (in_remainder[idx]) {
          in_remainder[idx] = 0;
          out.test_ood.push_back(idx);
        }
      }
    } else {
      int32_t idx = static_cast<int32_t>(merged.interactions.size());
      merged.interactions.push_back({uit->second, iit->second, raw.timestamp, raw.rating});
      pair_index[key].push_back(idx);
      in_remainder.push_back(0);
      out.test_ood.push_back(idx);
    }
  }
  std::sort(out.test_ood.begin(), out.test_ood.end());
  merged.recount_popularity();

  split_remainder(merged, in_remainder, seed, out);
  return {std::move(merged), std::move(out)};
}

void save_split(const std::string& path, const SplitBundle& bundle) {
  json j = {{"shift_kind", to_string(bundle.shift_kind)},
            {"seed", bundle.seed},
            {"ratios", bundle.ratios},
            {"ood_fraction", bundle.ood_fraction},
            {"counts",
             {{"train", bundle.train.size()},
              {"val", bundle.val.size()},
              {"test_iid", bundle.test_iid.size()},
              {"test_ood", bundle.test_ood.size()}}},
            {"single_interaction_warnings", bundle.single_interaction_warnings},
            {"train", bundle.train},
            {"val", bundle.val},
            {"test_iid", bundle.test_iid},
            {"test_ood", bundle.test_ood}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest: " + path);
  out << j.dump(2) << "\n";
}

SplitBundle load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split manifest: " + path);
  json j = json::parse(in);
  SplitBundle b;
  b.shift_kind = shift_kind_from_string(j.at("shift_kind").get<std::string>());
  b.seed = j.at("seed").get<uint64_t>();
  b.ratios = j.at("ratios").get<std::array<int, 3>>();
  b.ood_fraction = j.at("ood_fraction").get<double>();
  b.single_interaction_warnings = j.value("single_interaction_warnings", 0);
  b.train = j.at("train").get<std::vector<int32_t>>();
  b.val = j.at("val").get<std::vector<int32_t>>();
  b.test_iid = j.at("test_iid").get<std::vector<int32_t>>();
  b.test_ood = j.at("test_ood").get<std::vector<int32_t>>();
  return b;
}

}  // namespace cnsdiff
