#include <doctest.h>

#include <cmath>

#include "cnsdiff/sampler.hpp"

using namespace cnsdiff;

namespace {

Dataset pop_dataset(const std::vector<int>& popularity, int32_t users = 1) {
  Dataset d;
  d.num_items = static_cast<int32_t>(popularity.size());
  d.num_users = users;
  int64_t ts = 0;
  for (int32_t v = 0; v < d.num_items; ++v) {
    for (int k = 0; k < popularity[v]; ++k) d.interactions.push_back({0, v, ts++, 1.0f});
  }
  d.recount_popularity();
  return d;
}

PositiveSet positives_of(int32_t num_users, const std::vector<std::pair<int32_t, int32_t>>& pos) {
  PositiveSet p;
  p.items.resize(num_users);
  for (auto [u, v] : pos) p.items[u].insert(v);
  return p;
}

}  // namespace

TEST_CASE("uniform negative: the single remaining item is certain") {
  Dataset d = pop_dataset({1, 1, 1});
  PositiveSet pos = positives_of(1, {{0, 0}, {0, 1}});
  Rng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(sample_uniform_negative(0, pos, 3, rng) == 2);
}

TEST_CASE("uniform negative: error when every item is interacted") {
  Dataset d = pop_dataset({1, 1});
  PositiveSet pos = positives_of(1, {{0, 0}, {0, 1}});
  Rng rng(1);
  CHECK_THROWS_AS(sample_uniform_negative(0, pos, 2, rng), std::runtime_error);
}

TEST_CASE("popularity negative: symmetric weights draw evenly, zero weights never") {
  Dataset d = pop_dataset({0, 5, 5});
  d.item_popularity = {0, 5, 5};
  PositiveSet pos = positives_of(1, {{0, 0}});
  auto cdf = popularity_cdf(d);
  Rng rng(3);
  int count1 = 0, count2 = 0;
  const int trials = 5000;
  for (int i = 0; i < trials; ++i) {
    int32_t v = sample_popularity_negative(0, pos, d, cdf, rng);
    CHECK(v != 0);
    if (v == 1) ++count1;
    if (v == 2) ++count2;
  }
  CHECK(std::abs(count1 - count2) < 0.08 * trials);
}

TEST_CASE("dns picks the argmax-scoring candidate") {
  Dataset d = pop_dataset({1, 1, 1});
  PositiveSet pos = positives_of(1, {{0, 0}});
  EmbeddingState<double> state;
  state.user_table = Mat<double>(1, 1);
  state.item_table = Mat<double>(3, 1);
  state.user_table.at(0, 0) = 1.0;
  state.item_table.at(0, 0) = 0.0;
  state.item_table.at(1, 0) = 0.2;
  state.item_table.at(2, 0) = 0.9;
  Rng rng(7);
  // candidate pool large enough to contain both non-positives
  auto top = dns_sample(0, pos, state, 3, 1, 16, rng);
  CHECK(top[0] == 2);
}

TEST_CASE("dns over the full complement equals the brute-force argmax") {
  const int32_t N = 50;
  Dataset d;
  d.num_users = 1;
  d.num_items = N;
  d.item_popularity.assign(N, 1);
  PositiveSet pos = positives_of(1, {{0, 3}, {0, 17}, {0, 42}});
  EmbeddingState<double> state;
  state.user_table = Mat<double>(1, 4);
  state.item_table = Mat<double>(N, 4);
  Rng rng(5);
  for (auto& x : state.user_table.a) x = rng.gaussian();
  for (auto& x : state.item_table.a) x = rng.gaussian();

  int32_t brute = -1;
  double best = -1e300;
  for (int32_t v = 0; v < N; ++v) {
    if (pos.contains(0, v)) continue;
    const double s = score(state, 0, v);
    if (s > best) {
      best = s;
      brute = v;
    }
  }
  // with a pool far larger than N, rejection covers the whole complement
  Rng rng2(9);
  auto top = dns_sample(0, pos, state, N, 1, 4000, rng2);
  CHECK(top[0] == brute);
}

TEST_CASE("baseline samplers never return a positive item") {
  Dataset d = pop_dataset({3, 1, 4, 2, 5});
  PositiveSet pos = positives_of(1, {{0, 0}, {0, 2}});
  auto cdf = popularity_cdf(d);
  EmbeddingState<double> state;
  state.user_table = Mat<double>(1, 2);
  state.item_table = Mat<double>(5, 2);
  Rng rng(11);
  for (auto& x : state.user_table.a) x = rng.gaussian();
  for (auto& x : state.item_table.a) x = rng.gaussian();
  for (SamplerKind kind : {SamplerKind::random_uniform, SamplerKind::popularity, SamplerKind::dns}) {
    for (int i = 0; i < 500; ++i) {
      int32_t v = baseline_sample(kind, 0, pos, state, d, cdf, 8, rng);
      CHECK(!pos.contains(0, v));
    }
  }
}

TEST_CASE("select_hardest: argmax with small-step tie-break and scale invariance") {
  std::vector<double> zu = {1.0, 0.0};
  std::vector<double> c1 = {0.5, 0.0}, c2 = {0.9, 0.0};
  std::vector<std::pair<int, const double*>> cands = {{4, c1.data()}, {8, c2.data()}};
  CHECK(select_hardest(zu.data(), 2, cands) == 1);

  std::vector<std::pair<int, const double*>> single = {{4, c1.data()}};
  CHECK(select_hardest(zu.data(), 2, single) == 0);

  std::vector<std::pair<int, const double*>> empty;
  CHECK_THROWS_AS(select_hardest(zu.data(), 2, empty), std::runtime_error);

  // equal scores -> smaller t wins
  std::vector<double> same1 = {0.7, 0.0}, same2 = {0.7, 0.0};
  std::vector<std::pair<int, const double*>> tied = {{8, same1.data()}, {2, same2.data()}};
  CHECK(tied[select_hardest(zu.data(), 2, tied)].first == 2);

  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(3), a(3), b(3), c(3);
    for (auto* v : {&u, &a, &b, &c}) {
      for (auto& x : *v) x = rng.gaussian();
    }
    std::vector<std::pair<int, const double*>> cs = {{1, a.data()}, {2, b.data()}, {3, c.data()}};
    const int base = select_hardest(u.data(), 3, cs);
    const double scale = 0.1 + 10.0 * rng.uniform();
    std::vector<double> su(3);
    for (int i = 0; i < 3; ++i) su[i] = scale * u[i];
    CHECK(select_hardest(su.data(), 3, cs) == base);
  }
}

TEST_CASE("mix weights: normalized endpoints and linear interpolation") {
  MixSchedule s{2.0, 8.0, 9.0, 1.0, 100};
  auto [a0, b0] = mix_weights_at(s, 0);
  CHECK(a0 == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(b0 == doctest::Approx(0.8).epsilon(1e-12));
  auto [a1, b1] = mix_weights_at(s, 100);
  CHECK(a1 == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(b1 == doctest::Approx(0.1).epsilon(1e-12));
  auto [am, bm] = mix_weights_at(s, 50);
  CHECK(am == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(bm == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("mix weights evolve monotonically") {
  MixSchedule s{2.0, 8.0, 9.0, 1.0, 50};
  double prev_beta = 1.0;
  for (int e = 0; e <= 50; ++e) {
    auto [a, b] = mix_weights_at(s, e);
    CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b <= prev_beta + 1e-12);
    prev_beta = b;
  }
}

TEST_CASE("mix_negative: convex combination") {
  std::vector<double> er = {1.0, 0.0}, eh = {0.0, 1.0}, out(2);
  mix_negative(er.data(), eh.data(), 0.5, 0.5, out.data(), 2);
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);
  mix_negative(er.data(), eh.data(), 1.0, 0.0, out.data(), 2);
  CHECK(out == er);

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(4), b(4), mixed(4);
    for (auto* v : {&a, &b}) {
      for (auto& x : *v) x = rng.gaussian();
    }
    const double alpha = rng.uniform();
    mix_negative(a.data(), b.data(), alpha, 1.0 - alpha, mixed.data(), 4);
    auto norm = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    };
    CHECK(norm(mixed) <= std::max(norm(a), norm(b)) + 1e-12);
  }
}
