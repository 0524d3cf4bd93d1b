#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cnsdiff/common.hpp"
#include "cnsdiff/corpus.hpp"
#include "cnsdiff/rng.hpp"
#include "cnsdiff/splits.hpp"
#include "cnsdiff/tensor.hpp"

namespace cnsdiff {

template <typename T>
struct EmbeddingState {
  Mat<T> user_table;  // M x d
  Mat<T> item_table;  // N x d
  std::size_t dim() const { return user_table.cols; }
};

template <typename T>
EmbeddingState<T> init_embeddings(int32_t num_users, int32_t num_items, int d,
                                  uint64_t seed, double stddev = 0.01) {
  EmbeddingState<T> s;
  s.user_table = Mat<T>(num_users, d);
  s.item_table = Mat<T>(num_items, d);
  Rng rng(stream_seed(seed, RngStream::init));
  for (auto& x : s.user_table.a) x = static_cast<T>(rng.gaussian() * stddev);
  for (auto& x : s.item_table.a) x = static_cast<T>(rng.gaussian() * stddev);
  return s;
}

// Bipartite train-interaction graph with symmetric 1/sqrt(deg_u * deg_v)
// normalization, stored CSR from both sides. Edge order is (user, item)
// ascending, so every per-row accumulation below has a fixed summation order
// and results do not depend on thread count.
struct NormGraph {
  int32_t num_users = 0;
  int32_t num_items = 0;
  std::vector<std::pair<int32_t, int32_t>> edges;  // sorted (user, item)
  std::vector<double> edge_weight;
  std::vector<int64_t> user_degree, item_degree;
  // CSR over users: items adjacent to each user, and the symmetric weights.
  std::vector<int64_t> user_offsets;
  std::vector<int32_t> user_adj;
  std::vector<double> user_adj_w;
  // CSR over items.
  std::vector<int64_t> item_offsets;
  std::vector<int32_t> item_adj;
  std::vector<double> item_adj_w;
};

NormGraph build_graph(const Dataset& dataset, const SplitBundle& split);

// LightGCN propagation: K rounds of weighted neighbor averaging over the
// bipartite graph, output = mean of the layer-0..K representations. Isolated
// nodes carry their representation through every layer, so their output
// equals their input. Pure function of the input tables.
template <typename T>
EmbeddingState<T> propagate_serial(const EmbeddingState<T>& state, const NormGraph& g, int K) {
  const std::size_t d = state.dim();
  Mat<T> cur_u = state.user_table, cur_v = state.item_table;
  Mat<T> acc_u = state.user_table, acc_v = state.item_table;
  for (int layer = 0; layer < K; ++layer) {
    Mat<T> next_u(g.num_users, d), next_v(g.num_items, d);
    for (int32_t u = 0; u < g.num_users; ++u) {
      T* out = next_u.row(u);
      if (g.user_offsets[u] == g.user_offsets[u + 1]) {
        const T* prev = cur_u.row(u);
        for (std::size_t j = 0; j < d; ++j) out[j] = prev[j];
      }
      for (int64_t e = g.user_offsets[u]; e < g.user_offsets[u + 1]; ++e) {
        axpy(static_cast<T>(g.user_adj_w[e]), cur_v.row(g.user_adj[e]), out, d);
      }
    }
    for (int32_t v = 0; v < g.num_items; ++v) {
      T* out = next_v.row(v);
      if (g.item_offsets[v] == g.item_offsets[v + 1]) {
        const T* prev = cur_v.row(v);
        for (std::size_t j = 0; j < d; ++j) out[j] = prev[j];
      }
      for (int64_t e = g.item_offsets[v]; e < g.item_offsets[v + 1]; ++e) {
        axpy(static_cast<T>(g.item_adj_w[e]), cur_u.row(g.item_adj[e]), out, d);
      }
    }
    for (std::size_t i = 0; i < acc_u.a.size(); ++i) acc_u.a[i] += next_u.a[i];
    for (std::size_t i = 0; i < acc_v.a.size(); ++i) acc_v.a[i] += next_v.a[i];
    cur_u = std::move(next_u);
    cur_v = std::move(next_v);
  }
  const T inv = T(1) / static_cast<T>(K + 1);
  EmbeddingState<T> out;
  out.user_table = std::move(acc_u);
  out.item_table = std::move(acc_v);
  for (auto& x : out.user_table.a) x *= inv;
  for (auto& x : out.item_table.a) x *= inv;
  return out;
}

// OpenMP variant: rows are independent, each row keeps the CSR edge order, so
// the result is bitwise identical to propagate_serial for any thread count.
template <typename T>
EmbeddingState<T> propagate(const EmbeddingState<T>& state, const NormGraph& g, int K,
                            int threads = 0);

// The propagation operator is symmetric, so backpropagation through it is the
// same weighted averaging applied to the output gradients.
template <typename T>
EmbeddingState<T> propagate_backward(const EmbeddingState<T>& output_grads, const NormGraph& g,
                                     int K, int threads = 0) {
  return propagate(output_grads, g, K, threads);
}

template <typename T>
T score(const EmbeddingState<T>& state, int32_t u, int32_t v) {
  return dot(state.user_table.row(u), state.item_table.row(v), state.dim());
}

// --- implementation ---

template <typename T>
EmbeddingState<T> propagate(const EmbeddingState<T>& state, const NormGraph& g, int K,
                            int threads) {
  const std::size_t d = state.dim();
  const int nthreads = resolve_threads(threads);
  (void)nthreads;
  Mat<T> cur_u = state.user_table, cur_v = state.item_table;
  Mat<T> acc_u = state.user_table, acc_v = state.item_table;
  for (int layer = 0; layer < K; ++layer) {
    Mat<T> next_u(g.num_users, d), next_v(g.num_items, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
    for (int32_t u = 0; u < g.num_users; ++u) {
      T* out = next_u.row(u);
      if (g.user_offsets[u] == g.user_offsets[u + 1]) {
        const T* prev = cur_u.row(u);
        for (std::size_t j = 0; j < d; ++j) out[j] = prev[j];
      }
      for (int64_t e = g.user_offsets[u]; e < g.user_offsets[u + 1]; ++e) {
        axpy(static_cast<T>(g.user_adj_w[e]), cur_v.row(g.user_adj[e]), out, d);
      }
      T* accrow = acc_u.row(u);
      for (std::size_t j = 0; j < d; ++j) accrow[j] += out[j];
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
    for (int32_t v = 0; v < g.num_items; ++v) {
      T* out = next_v.row(v);
      if (g.item_offsets[v] == g.item_offsets[v + 1]) {
        const T* prev = cur_v.row(v);
        for (std::size_t j = 0; j < d; ++j) out[j] = prev[j];
      }
      for (int64_t e = g.item_offsets[v]; e < g.item_offsets[v + 1]; ++e) {
        axpy(static_cast<T>(g.item_adj_w[e]), cur_u.row(g.item_adj[e]), out, d);
      }
      T* accrow = acc_v.row(v);
      for (std::size_t j = 0; j < d; ++j) accrow[j] += out[j];
    }
    cur_u = std::move(next_u);
    cur_v = std::move(next_v);
  }
  const T inv = T(1) / static_cast<T>(K + 1);
  EmbeddingState<T> out;
  out.user_table = std::move(acc_u);
  out.item_table = std::move(acc_v);
  for (auto& x : out.user_table.a) x *= inv;
  for (auto& x : out.item_table.a) x *= inv;
  return out;
}

}  // namespace cnsdiff
