#include <doctest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <random>
#include <set>

#include "cnsdiff/common.hpp"
#include "cnsdiff/corpus.hpp"
#include "cnsdiff/rng.hpp"
#include "cnsdiff/splits.hpp"

using namespace cnsdiff;

namespace {

Dataset make_dataset(const std::vector<std::array<int64_t, 3>>& rows, int32_t m, int32_t n) {
  Dataset d;
  d.num_users = m;
  d.num_items = n;
  for (const auto& r : rows) {
    d.interactions.push_back({static_cast<int32_t>(r[0]), static_cast<int32_t>(r[1]), r[2], 1.0f});
  }
  for (int32_t u = 0; u < m; ++u) {
    d.user_ids.push_back("u" + std::to_string(u));
    d.user_index.emplace(d.user_ids.back(), u);
  }
  for (int32_t v = 0; v < n; ++v) {
    d.item_ids.push_back("i" + std::to_string(v));
    d.item_index.emplace(d.item_ids.back(), v);
  }
  d.recount_popularity();
  return d;
}

Dataset skewed_dataset() {
  // 40 items in five popularity tiers (120/40/12/8/6). The global bucket skew
  // is > 10 while every bucket still holds enough interactions to absorb a
  // uniform share of the OOD draw.
  std::vector<std::array<int64_t, 3>> rows;
  int64_t ts = 0;
  int32_t user = 0;
  auto add = [&](int32_t item, int copies) {
    for (int c = 0; c < copies; ++c) {
      rows.push_back({user, item, ts});
      user = (user + 1) % 30;
      ts += 1;
    }
  };
  auto tier = [](int32_t k) {
    if (k < 4) return 120;
    if (k < 10) return 40;
    if (k < 20) return 12;
    if (k < 30) return 8;
    return 6;
  };
  for (int32_t k = 0; k < 40; ++k) add(k, tier(k));
  return make_dataset(rows, 30, 40);
}

void check_partition(const Dataset& d, const SplitBundle& b) {
  std::set<int32_t> seen;
  auto absorb = [&](const std::vector<int32_t>& part) {
    for (int32_t i : part) {
      CHECK(seen.insert(i).second);  // disjoint
      CHECK(i >= 0);
      CHECK(i < static_cast<int32_t>(d.interactions.size()));
    }
  };
  absorb(b.train);
  absorb(b.val);
  absorb(b.test_iid);
  absorb(b.test_ood);
  CHECK(seen.size() == d.interactions.size());  // exhaustive
}

// Independent oracle: sequential weighted sampling without replacement with a
// plain generator, repeated many times.
double oracle_share_item_a(const Dataset& d, int n_ood, int trials) {
  std::mt19937_64 gen(12345);
  double share_sum = 0.0;
  const int32_t n = static_cast<int32_t>(d.interactions.size());
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> w(n);
    std::vector<char> taken(n, 0);
    for (int32_t i = 0; i < n; ++i) {
      w[i] = 1.0 / static_cast<double>(d.item_popularity[d.interactions[i].item]);
    }
    int count_a = 0;
    for (int k = 0; k < n_ood; ++k) {
      double total = 0.0;
      for (int32_t i = 0; i < n; ++i) {
        if (!taken[i]) total += w[i];
      }
      double x = std::uniform_real_distribution<double>(0.0, total)(gen);
      int32_t pick = -1;
      for (int32_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        x -= w[i];
        if (x <= 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (int32_t i = n - 1; i >= 0; --i) {
          if (!taken[i]) {
            pick = i;
            break;
          }
        }
      }
      taken[pick] = 1;
      if (d.interactions[pick].item == 0) count_a += 1;
    }
    share_sum += static_cast<double>(count_a) / n_ood;
  }
  return share_sum / trials;
}

}  // namespace

TEST_CASE("temporal split sends the latest interaction to OOD") {
  Dataset d = make_dataset({{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 5}}, 1, 5);
  SplitBundle b = build_split(d, ShiftKind::temporal, {7, 1, 2}, 0.2, 1);
  REQUIRE(b.test_ood.size() == 1);
  CHECK(d.interactions[b.test_ood[0]].timestamp == 5);
  CHECK(b.train.size() == 3);
  CHECK(b.val.size() == 0);
  CHECK(b.test_iid.size() == 1);
  check_partition(d, b);
}

TEST_CASE("popularity split: exact ratio arithmetic on 100 interactions") {
  std::vector<std::array<int64_t, 3>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({0, i, i});
  Dataset d = make_dataset(rows, 1, 100);
  SplitBundle b = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, 7);
  CHECK(b.test_ood.size() == 20);
  CHECK(b.train.size() == 56);
  CHECK(b.val.size() == 8);
  CHECK(b.test_iid.size() == 16);
  check_partition(d, b);
}

TEST_CASE("partition exactness for every shift kind") {
  Dataset d = skewed_dataset();
  for (ShiftKind kind : {ShiftKind::none, ShiftKind::popularity, ShiftKind::temporal}) {
    SplitBundle b = build_split(d, kind, {7, 1, 2}, 0.2, 11);
    check_partition(d, b);
  }
}

TEST_CASE("per-user 7:1:2 within rounding") {
  Dataset d = skewed_dataset();
  SplitBundle b = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, 3);
  std::vector<std::array<int32_t, 3>> per_user(d.num_users, {0, 0, 0});
  std::vector<int32_t> remainder(d.num_users, 0);
  for (int32_t i : b.train) per_user[d.interactions[i].user][0] += 1;
  for (int32_t i : b.val) per_user[d.interactions[i].user][1] += 1;
  for (int32_t i : b.test_iid) per_user[d.interactions[i].user][2] += 1;
  for (int32_t u = 0; u < d.num_users; ++u) {
    remainder[u] = per_user[u][0] + per_user[u][1] + per_user[u][2];
    const double n = remainder[u];
    CHECK(std::abs(per_user[u][0] - 0.7 * n) <= 1.0);
    CHECK(std::abs(per_user[u][1] - 0.1 * n) <= 1.0);
    CHECK(std::abs(per_user[u][2] - 0.2 * n) <= 1.0);
  }
}

TEST_CASE("temporal ordering: non-OOD interactions precede OOD per user") {
  Dataset d = skewed_dataset();
  SplitBundle b = build_split(d, ShiftKind::temporal, {7, 1, 2}, 0.2, 5);
  std::vector<int64_t> ood_min(d.num_users, INT64_MAX);
  for (int32_t i : b.test_ood) {
    auto& r = d.interactions[i];
    ood_min[r.user] = std::min(ood_min[r.user], r.timestamp);
  }
  auto check_before = [&](const std::vector<int32_t>& part) {
    for (int32_t i : part) {
      const auto& r = d.interactions[i];
      if (ood_min[r.user] != INT64_MAX) CHECK(r.timestamp <= ood_min[r.user]);
    }
  };
  check_before(b.train);
  check_before(b.val);
  check_before(b.test_iid);
}

TEST_CASE("single-interaction users go to train with a warning") {
  Dataset d = make_dataset({{0, 0, 1}, {1, 0, 1}, {1, 1, 2}, {1, 2, 3}, {1, 3, 4}, {1, 4, 5}},
                           2, 5);
  SplitBundle b = build_split(d, ShiftKind::temporal, {7, 1, 2}, 0.2, 1);
  CHECK(b.single_interaction_warnings == 1);
  bool found = false;
  for (int32_t i : b.train) {
    if (d.interactions[i].user == 0) found = true;
  }
  CHECK(found);
}

TEST_CASE("popularity OOD bucket occupancy is near uniform when the global skew is large") {
  Dataset d = skewed_dataset();
  auto buckets = popularity_buckets(d, 4);
  std::array<int64_t, 4> global{};
  for (const auto& r : d.interactions) global[buckets[r.item]] += 1;
  const double global_ratio =
      static_cast<double>(*std::max_element(global.begin(), global.end())) /
      static_cast<double>(*std::min_element(global.begin(), global.end()));
  REQUIRE(global_ratio >= 10.0);

  double ratio_sum = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    SplitBundle b = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, seed);
    std::array<int64_t, 4> occ{};
    for (int32_t i : b.test_ood) occ[buckets[d.interactions[i].item]] += 1;
    const double mx = static_cast<double>(*std::max_element(occ.begin(), occ.end()));
    const double mn = static_cast<double>(std::max<int64_t>(
        1, *std::min_element(occ.begin(), occ.end())));
    ratio_sum += mx / mn;
  }
  CHECK(ratio_sum / 5.0 <= 2.0);
}

TEST_CASE("two-item inverse-popularity histogram against a brute-force oracle") {
  // Item 0 has popularity 90, item 1 popularity 10.
  std::vector<std::array<int64_t, 3>> rows;
  for (int i = 0; i < 90; ++i) rows.push_back({0, 0, i});
  for (int i = 0; i < 10; ++i) rows.push_back({0, 1, 100 + i});
  Dataset d = make_dataset(rows, 1, 2);

  double share_sum = 0.0;
  const int seeds = 200;
  for (uint64_t seed = 0; seed < seeds; ++seed) {
    SplitBundle b = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, seed);
    int count_a = 0;
    for (int32_t i : b.test_ood) {
      if (d.interactions[i].item == 0) count_a += 1;
    }
    const double share_a = static_cast<double>(count_a) / b.test_ood.size();
    CHECK(std::abs(share_a - (1.0 - share_a)) < 0.8);
    share_sum += share_a;
  }
  const double ours = share_sum / seeds;
  const double oracle = oracle_share_item_a(d, 20, 400);
  CHECK(std::abs(ours - oracle) < 0.05);
}

TEST_CASE("exposure split moves matching pairs and appends new ones") {
  Dataset d = make_dataset({{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {1, 1, 4}, {1, 2, 5}}, 2, 3);
  std::vector<RawInteraction> ext = {{"u0", "i1", 50, 1.0f}, {"u1", "i9", 60, 1.0f}};
  CHECK_THROWS_WITH_AS(build_split_exposure(d, ext, {7, 1, 2}, 1),
                       doctest::Contains("unknown id"), std::runtime_error);
  ext[1] = {"u0", "i2", 60, 1.0f};  // valid ids, previously unseen pair
  auto [merged, b] = build_split_exposure(d, ext, {7, 1, 2}, 1);
  // (u0,i1) existed -> moved; (u0,i2) is new -> appended
  CHECK(merged.interactions.size() == 6);
  CHECK(b.test_ood.size() == 2);
  check_partition(merged, b);
  SUBCASE("empty exposure list is a config error") {
    CHECK_THROWS_AS(build_split_exposure(d, {}, {7, 1, 2}, 1), ConfigError);
  }
}

TEST_CASE("split determinism and manifest round-trip") {
  Dataset d = skewed_dataset();
  SplitBundle a = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, 77);
  SplitBundle b = build_split(d, ShiftKind::popularity, {7, 1, 2}, 0.2, 77);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test_iid == b.test_iid);
  CHECK(a.test_ood == b.test_ood);

  auto path = (std::filesystem::temp_directory_path() / "cnsdiff_split.json").string();
  save_split(path, a);
  SplitBundle c = load_split(path);
  CHECK(c.shift_kind == a.shift_kind);
  CHECK(c.train == a.train);
  CHECK(c.test_ood == a.test_ood);
}
