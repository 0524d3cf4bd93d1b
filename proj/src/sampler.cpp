#include "cnsdiff/sampler.hpp"

namespace cnsdiff {

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::random_uniform: return "random";
    case SamplerKind::popularity: return "popularity";
    case SamplerKind::dns: return "dns";
    case SamplerKind::cnsdiff: return "cnsdiff";
  }
  return "random";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "random") return SamplerKind::random_uniform;
  if (s == "popularity") return SamplerKind::popularity;
  if (s == "dns") return SamplerKind::dns;
  if (s == "cnsdiff") return SamplerKind::cnsdiff;
  throw ConfigError("unknown sampler kind: " + s);
}

int32_t sample_uniform_negative(int32_t u, const PositiveSet& positives, int32_t num_items,
                                Rng& rng) {
  const std::size_t pos = positives.count(u);
  if (pos >= static_cast<std::size_t>(num_items)) {
    throw std::runtime_error("user " + std::to_string(u) + " has interacted with every item");
  }
  // Rejection is cheap while positives are sparse; fall back to an indexed
  // draw over the explicit complement when they are not.
  if (pos * 2 < static_cast<std::size_t>(num_items)) {
    for (int tries = 0; tries < 64; ++tries) {
      int32_t v = static_cast<int32_t>(rng.uniform_below(num_items));
      if (!positives.contains(u, v)) return v;
    }
  }
  std::vector<int32_t> complement;
  complement.reserve(num_items - pos);
  for (int32_t v = 0; v < num_items; ++v) {
    if (!positives.contains(u, v)) complement.push_back(v);
  }
  return complement[rng.uniform_below(complement.size())];
}

std::vector<double> popularity_cdf(const Dataset& dataset) {
  std::vector<double> cdf(dataset.num_items);
  double acc = 0.0;
  for (int32_t v = 0; v < dataset.num_items; ++v) {
    acc += static_cast<double>(dataset.item_popularity[v]);
    cdf[v] = acc;
  }
  return cdf;
}

int32_t sample_popularity_negative(int32_t u, const PositiveSet& positives,
                                   const Dataset& dataset,
                                   const std::vector<double>& cdf, Rng& rng) {
  if (positives.count(u) >= static_cast<std::size_t>(dataset.num_items)) {
    throw std::runtime_error("user " + std::to_string(u) + " has interacted with every item");
  }
  const double total = cdf.back();
  if (total <= 0.0) return sample_uniform_negative(u, positives, dataset.num_items, rng);
  for (int tries = 0; tries < 256; ++tries) {
    double x = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
    int32_t v = static_cast<int32_t>(it - cdf.begin());
    if (v >= dataset.num_items) v = dataset.num_items - 1;
    if (dataset.item_popularity[v] > 0 && !positives.contains(u, v)) return v;
  }
  // Weighted draw over the explicit complement (all positive-popularity items
  // the user has not seen); falls back to uniform if none carries weight.
  std::vector<int32_t> complement;
  std::vector<double> weights;
  for (int32_t v = 0; v < dataset.num_items; ++v) {
    if (!positives.contains(u, v) && dataset.item_popularity[v] > 0) {
      complement.push_back(v);
      weights.push_back(static_cast<double>(dataset.item_popularity[v]));
    }
  }
  if (complement.empty()) return sample_uniform_negative(u, positives, dataset.num_items, rng);
  double acc = 0.0;
  for (auto& w : weights) {
    acc += w;
    w = acc;
  }
  double x = rng.uniform() * acc;
  auto it = std::upper_bound(weights.begin(), weights.end(), x);
  std::size_t k = static_cast<std::size_t>(it - weights.begin());
  if (k >= complement.size()) k = complement.size() - 1;
  return complement[k];
}

}  // namespace cnsdiff
