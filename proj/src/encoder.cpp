#include "cnsdiff/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnsdiff {

NormGraph build_graph(const Dataset& dataset, const SplitBundle& split) {
  if (split.train.empty()) throw std::runtime_error("train split is empty");
  NormGraph g;
  g.num_users = dataset.num_users;
  g.num_items = dataset.num_items;
  g.edges.reserve(split.train.size());
  for (int32_t idx : split.train) {
    const auto& r = dataset.interactions[idx];
    g.edges.emplace_back(r.user, r.item);
  }
  std::sort(g.edges.begin(), g.edges.end());

  g.user_degree.assign(g.num_users, 0);
  g.item_degree.assign(g.num_items, 0);
  for (const auto& [u, v] : g.edges) {
    g.user_degree[u] += 1;
    g.item_degree[v] += 1;
  }
  g.edge_weight.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [u, v] = g.edges[e];
    g.edge_weight[e] =
        1.0 / std::sqrt(static_cast<double>(g.user_degree[u]) * static_cast<double>(g.item_degree[v]));
  }

  // CSR over users follows directly from the (u, v) sort.
  g.user_offsets.assign(g.num_users + 1, 0);
  for (const auto& [u, v] : g.edges) g.user_offsets[u + 1] += 1;
  for (int32_t u = 0; u < g.num_users; ++u) g.user_offsets[u + 1] += g.user_offsets[u];
  g.user_adj.resize(g.edges.size());
  g.user_adj_w.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    g.user_adj[e] = g.edges[e].second;
    g.user_adj_w[e] = g.edge_weight[e];
  }

  // CSR over items: per item, neighbors in (u, v) edge order.
  g.item_offsets.assign(g.num_items + 1, 0);
  for (const auto& [u, v] : g.edges) g.item_offsets[v + 1] += 1;
  for (int32_t v = 0; v < g.num_items; ++v) g.item_offsets[v + 1] += g.item_offsets[v];
  std::vector<int64_t> cursor(g.item_offsets.begin(), g.item_offsets.end() - 1);
  g.item_adj.resize(g.edges.size());
  g.item_adj_w.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [u, v] = g.edges[e];
    g.item_adj[cursor[v]] = u;
    g.item_adj_w[cursor[v]] = g.edge_weight[e];
    cursor[v] += 1;
  }
  return g;
}

}  // namespace cnsdiff
