#include "cnsdiff/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cnsdiff/common.hpp"
#include "cnsdiff/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cnsdiff {

void Dataset::recount_popularity() {
  item_popularity.assign(num_items, 0);
  for (const auto& r : interactions) item_popularity[r.item] += 1;
}

namespace {

// Minimal RFC4180-ish CSV: quoted fields with "" escapes, no embedded newlines.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

int64_t parse_i64(const std::string& s, const char* what, std::size_t line_no) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": unparseable " + what +
                             " '" + s + "'");
  }
  return v;
}

double parse_f64(const std::string& s, const char* what, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": unparseable " + what +
                             " '" + s + "'");
  }
}

struct RawRow {
  std::string user, item;
  int64_t timestamp;
  double rating;
};

}  // namespace

Dataset load_interactions(const std::string& path, const LoadSchema& schema,
                          int min_user_interactions, int min_item_interactions,
                          double rating_threshold) {
  if (min_user_interactions < 0 || min_item_interactions < 0) {
    throw ConfigError("interaction floors must be >= 0");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("empty file: " + path);
  auto header = split_csv_line(header_line);
  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw ConfigError("column '" + name + "' not found in header of " + path);
  };
  const int uc = col_of(schema.user_col);
  const int ic = col_of(schema.item_col);
  const int tc = col_of(schema.time_col);
  const int rc = col_of(schema.rating_col);
  const std::size_t need = static_cast<std::size_t>(std::max({uc, ic, tc, rc})) + 1;

  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() < need) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected at least " +
                               std::to_string(need) + " columns, got " + std::to_string(f.size()));
    }
    RawRow r;
    r.user = f[uc];
    r.item = f[ic];
    r.timestamp = parse_i64(f[tc], "timestamp", line_no);
    r.rating = parse_f64(f[rc], "rating", line_no);
    if (r.timestamp < 0) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": negative timestamp");
    }
    if (r.rating < rating_threshold) continue;
    rows.push_back(std::move(r));
  }

  // Duplicate (user,item) pairs collapse to the latest timestamp.
  {
    std::unordered_map<std::string, std::size_t> latest;
    latest.reserve(rows.size());
    std::vector<RawRow> dedup;
    dedup.reserve(rows.size());
    for (auto& r : rows) {
      std::string key = r.user + '\x1f' + r.item;
      auto it = latest.find(key);
      if (it == latest.end()) {
        latest.emplace(std::move(key), dedup.size());
        dedup.push_back(std::move(r));
      } else if (r.timestamp >= dedup[it->second].timestamp) {
        dedup[it->second] = std::move(r);
      }
    }
    rows = std::move(dedup);
  }

  // Iterative floor filtering until both sides are stable.
  std::vector<char> keep(rows.size(), 1);
  for (;;) {
    std::unordered_map<std::string, int64_t> ucount, icount;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!keep[i]) continue;
      ucount[rows[i].user] += 1;
      icount[rows[i].item] += 1;
    }
    bool changed = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!keep[i]) continue;
      if (ucount[rows[i].user] < min_user_interactions ||
          icount[rows[i].item] < min_item_interactions) {
        keep[i] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  Dataset d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!keep[i]) continue;
    const auto& r = rows[i];
    auto uit = d.user_index.find(r.user);
    int32_t u;
    if (uit == d.user_index.end()) {
      u = static_cast<int32_t>(d.user_ids.size());
      d.user_index.emplace(r.user, u);
      d.user_ids.push_back(r.user);
    } else {
      u = uit->second;
    }
    auto iit = d.item_index.find(r.item);
    int32_t v;
    if (iit == d.item_index.end()) {
      v = static_cast<int32_t>(d.item_ids.size());
      d.item_index.emplace(r.item, v);
      d.item_ids.push_back(r.item);
    } else {
      v = iit->second;
    }
    d.interactions.push_back({u, v, r.timestamp, static_cast<float>(r.rating)});
  }
  if (d.interactions.empty()) throw std::runtime_error("empty after filtering: " + path);
  d.num_users = static_cast<int32_t>(d.user_ids.size());
  d.num_items = static_cast<int32_t>(d.item_ids.size());
  d.recount_popularity();
  return d;
}

std::vector<int32_t> popularity_buckets(const Dataset& dataset, int num_buckets) {
  if (num_buckets < 1) throw ConfigError("num_buckets must be >= 1");
  if (num_buckets > dataset.num_items) {
    throw ConfigError("num_buckets exceeds item count");
  }
  const int32_t n = dataset.num_items;
  std::vector<int32_t> order(n);
  for (int32_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (dataset.item_popularity[a] != dataset.item_popularity[b]) {
      return dataset.item_popularity[a] > dataset.item_popularity[b];
    }
    return a < b;
  });
  std::vector<int32_t> bucket(n);
  for (int32_t pos = 0; pos < n; ++pos) {
    bucket[order[pos]] = static_cast<int32_t>(
        (static_cast<int64_t>(pos) * num_buckets) / n);
  }
  return bucket;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_users < 1 || num_items < 1) throw ConfigError("synthetic: M and N must be >= 1");
  if (num_envs < 1) throw ConfigError("synthetic: num_envs must be >= 1");
  if (preference_rank < 1) throw ConfigError("synthetic: preference_rank must be >= 1");
  if (preference_keep_frac <= 0.0 || preference_keep_frac >= 1.0) {
    throw ConfigError("synthetic: preference_keep_frac must be in (0,1)");
  }
  if (exposure.rows != static_cast<std::size_t>(num_items) ||
      exposure.cols != static_cast<std::size_t>(num_envs)) {
    throw ConfigError("synthetic: exposure matrix must be num_items x num_envs");
  }
  for (double p : exposure.a) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("synthetic: phi(v,e) must be in (0,1]");
  }
  if (!env_probs.empty()) {
    if (env_probs.size() != static_cast<std::size_t>(num_envs)) {
      throw ConfigError("synthetic: env_probs size mismatch");
    }
    double s = 0.0;
    for (double p : env_probs) {
      if (p < 0.0) throw ConfigError("synthetic: env_probs must be nonnegative");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("synthetic: env_probs must sum to 1");
  }
}

SyntheticSpec make_uniform_exposure_spec(SyntheticSpec base, const std::vector<double>& phi_per_env) {
  if (phi_per_env.size() != static_cast<std::size_t>(base.num_envs)) {
    throw ConfigError("phi_per_env size must equal num_envs");
  }
  base.exposure = Mat<double>(base.num_items, base.num_envs);
  for (int32_t v = 0; v < base.num_items; ++v) {
    for (int e = 0; e < base.num_envs; ++e) base.exposure.at(v, e) = phi_per_env[e];
  }
  base.item_affinity.assign(base.num_items, -1);
  return base;
}

SyntheticSpec make_target_fnr_spec(SyntheticSpec base, const std::vector<double>& eta_per_env) {
  std::vector<double> phi(eta_per_env.size());
  for (std::size_t e = 0; e < eta_per_env.size(); ++e) {
    if (!(eta_per_env[e] >= 0.0 && eta_per_env[e] < 1.0)) {
      throw ConfigError("target_fnr entries must be in [0,1)");
    }
    phi[e] = 1.0 - eta_per_env[e];
  }
  return make_uniform_exposure_spec(std::move(base), phi);
}

SyntheticSpec make_item_affinity_spec(SyntheticSpec base, double phi_favored, double phi_other,
                                      uint64_t affinity_seed) {
  base.exposure = Mat<double>(base.num_items, base.num_envs);
  base.item_affinity.resize(base.num_items);
  Rng rng(splitmix64(affinity_seed ^ 0xa11f1u));
  for (int32_t v = 0; v < base.num_items; ++v) {
    int aff = static_cast<int>(rng.uniform_below(base.num_envs));
    base.item_affinity[v] = aff;
    for (int e = 0; e < base.num_envs; ++e) {
      base.exposure.at(v, e) = (e == aff) ? phi_favored : phi_other;
    }
  }
  return base;
}

std::pair<Dataset, GroundTruth> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int32_t M = spec.num_users, N = spec.num_items;
  const int E = spec.num_envs;
  std::vector<double> env_probs = spec.env_probs;
  if (env_probs.empty()) env_probs.assign(E, 1.0 / E);
  std::vector<double> env_cdf(E);
  {
    double acc = 0.0;
    for (int e = 0; e < E; ++e) {
      acc += env_probs[e];
      env_cdf[e] = acc;
    }
    env_cdf[E - 1] = 1.0;  // absorb rounding
  }

  Rng factor_rng(stream_seed(spec.seed, RngStream::init));
  const int r = spec.preference_rank;
  Mat<double> P(M, r), Q(N, r);
  const double scale = 1.0 / std::sqrt(static_cast<double>(r));
  for (auto& x : P.a) x = factor_rng.gaussian() * scale;
  for (auto& x : Q.a) x = factor_rng.gaussian() * scale;

  GroundTruth gt;
  gt.preference_score = Mat<float>(M, N);
  gt.preferred.assign(static_cast<std::size_t>(M) * N, 0);
  gt.item_affinity = spec.item_affinity.empty() ? std::vector<int>(N, -1) : spec.item_affinity;

  // Scores are rounded to float before thresholding so the stored matrix
  // reproduces the preferred set exactly on reload.
  std::vector<double> scores(static_cast<std::size_t>(M) * N);
  for (int32_t u = 0; u < M; ++u) {
    for (int32_t v = 0; v < N; ++v) {
      float s = static_cast<float>(dot(P.row(u), Q.row(v), r));
      gt.preference_score.at(u, v) = s;
      scores[static_cast<std::size_t>(u) * N + v] = static_cast<double>(s);
    }
  }
  // Threshold at the (1 - keep_frac) quantile of planted scores.
  {
    std::vector<double> sorted = scores;
    std::size_t k = static_cast<std::size_t>(
        std::floor((1.0 - spec.preference_keep_frac) * static_cast<double>(sorted.size())));
    if (k >= sorted.size()) k = sorted.size() - 1;
    std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
    gt.threshold = sorted[k];
  }

  gt.preferred_per_env.assign(E, 0);
  gt.unexposed_per_env.assign(E, 0);

  Dataset d;
  d.num_users = M;
  d.num_items = N;
  Rng draw_rng(stream_seed(spec.seed, RngStream::sampler));
  for (int32_t u = 0; u < M; ++u) {
    for (int32_t v = 0; v < N; ++v) {
      std::size_t idx = static_cast<std::size_t>(u) * N + v;
      if (!(scores[idx] >= gt.threshold)) continue;
      gt.preferred[idx] = 1;
      double ue = draw_rng.uniform();
      int e = 0;
      while (e < E - 1 && ue >= env_cdf[e]) ++e;
      gt.preferred_per_env[e] += 1;
      double ux = draw_rng.uniform();
      if (ux < spec.exposure.at(v, e)) {
        int64_t ts = static_cast<int64_t>(draw_rng.uniform_below(1000000));
        d.interactions.push_back({u, v, ts, 1.0f});
      } else {
        gt.unexposed_per_env[e] += 1;
      }
    }
  }
  if (d.interactions.empty()) {
    throw std::runtime_error("synthetic spec produced zero interactions");
  }

  gt.eta_hat.assign(E, 0.0);
  for (int e = 0; e < E; ++e) {
    if (gt.preferred_per_env[e] > 0) {
      gt.eta_hat[e] = static_cast<double>(gt.unexposed_per_env[e]) /
                      static_cast<double>(gt.preferred_per_env[e]);
    }
  }

  d.user_ids.resize(M);
  d.item_ids.resize(N);
  for (int32_t u = 0; u < M; ++u) {
    d.user_ids[u] = "u" + std::to_string(u);
    d.user_index.emplace(d.user_ids[u], u);
  }
  for (int32_t v = 0; v < N; ++v) {
    d.item_ids[v] = "i" + std::to_string(v);
    d.item_index.emplace(d.item_ids[v], v);
  }
  d.recount_popularity();
  return {std::move(d), std::move(gt)};
}

// ---------------------------------------------------------------------------

void save_dataset(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  {
    json meta = {{"num_users", dataset.num_users},
                 {"num_items", dataset.num_items},
                 {"num_interactions", dataset.interactions.size()}};
    std::ofstream out(fs::path(dir) / "dataset.json");
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "interactions.csv");
    out << "user,item,timestamp,rating\n";
    for (const auto& r : dataset.interactions) {
      out << r.user << ',' << r.item << ',' << r.timestamp << ',' << r.rating << "\n";
    }
  }
  auto dump_lines = [&](const char* name, const std::vector<std::string>& v) {
    std::ofstream out(fs::path(dir) / name);
    for (const auto& s : v) out << s << "\n";
  };
  dump_lines("user_ids.txt", dataset.user_ids);
  dump_lines("item_ids.txt", dataset.item_ids);
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  {
    std::ifstream in(fs::path(dir) / "dataset.json");
    if (!in) throw std::runtime_error("not a dataset directory (missing dataset.json): " + dir);
    json meta = json::parse(in);
    d.num_users = meta.at("num_users").get<int32_t>();
    d.num_items = meta.at("num_items").get<int32_t>();
  }
  {
    std::ifstream in(fs::path(dir) / "interactions.csv");
    if (!in) throw std::runtime_error("missing interactions.csv in " + dir);
    std::string line;
    std::getline(in, line);  // header
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 4) {
        throw std::runtime_error("interactions.csv line " + std::to_string(line_no) +
                                 ": expected 4 columns");
      }
      Interaction r;
      r.user = static_cast<int32_t>(parse_i64(f[0], "user", line_no));
      r.item = static_cast<int32_t>(parse_i64(f[1], "item", line_no));
      r.timestamp = parse_i64(f[2], "timestamp", line_no);
      r.rating = static_cast<float>(parse_f64(f[3], "rating", line_no));
      if (r.user < 0 || r.user >= d.num_users || r.item < 0 || r.item >= d.num_items) {
        throw std::runtime_error("interactions.csv line " + std::to_string(line_no) +
                                 ": index out of range");
      }
      d.interactions.push_back(r);
    }
  }
  auto read_lines = [&](const char* name, std::vector<std::string>& v, int32_t expect) {
    std::ifstream in(fs::path(dir) / name);
    std::string line;
    while (std::getline(in, line)) v.push_back(line);
    if (in.bad() || (expect >= 0 && static_cast<int32_t>(v.size()) != expect)) {
      v.clear();
      for (int32_t i = 0; i < expect; ++i) v.push_back(std::to_string(i));
    }
  };
  read_lines("user_ids.txt", d.user_ids, d.num_users);
  read_lines("item_ids.txt", d.item_ids, d.num_items);
  for (int32_t i = 0; i < d.num_users; ++i) d.user_index.emplace(d.user_ids[i], i);
  for (int32_t i = 0; i < d.num_items; ++i) d.item_index.emplace(d.item_ids[i], i);
  d.recount_popularity();
  return d;
}

void save_ground_truth(const std::string& dir, const GroundTruth& gt) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "preferences.bin", std::ios::binary);
    uint32_t dims[2] = {static_cast<uint32_t>(gt.preference_score.rows),
                        static_cast<uint32_t>(gt.preference_score.cols)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(gt.preference_score.a.data()),
              static_cast<std::streamsize>(gt.preference_score.a.size() * sizeof(float)));
  }
  {
    json side = {{"threshold", gt.threshold},
                 {"eta_hat", gt.eta_hat},
                 {"item_affinity", gt.item_affinity},
                 {"preferred_per_env", gt.preferred_per_env},
                 {"unexposed_per_env", gt.unexposed_per_env}};
    std::ofstream out(fs::path(dir) / "ground_truth.json");
    out << side.dump(2) << "\n";
  }
}

GroundTruth load_ground_truth(const std::string& dir) {
  GroundTruth gt;
  {
    std::ifstream in(fs::path(dir) / "preferences.bin", std::ios::binary);
    if (!in) throw std::runtime_error("missing preferences.bin in " + dir);
    uint32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    gt.preference_score = Mat<float>(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(gt.preference_score.a.data()),
            static_cast<std::streamsize>(gt.preference_score.a.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated preferences.bin in " + dir);
  }
  {
    std::ifstream in(fs::path(dir) / "ground_truth.json");
    if (!in) throw std::runtime_error("missing ground_truth.json in " + dir);
    json side = json::parse(in);
    gt.threshold = side.at("threshold").get<double>();
    gt.eta_hat = side.at("eta_hat").get<std::vector<double>>();
    gt.item_affinity = side.at("item_affinity").get<std::vector<int>>();
    gt.preferred_per_env = side.at("preferred_per_env").get<std::vector<int64_t>>();
    gt.unexposed_per_env = side.at("unexposed_per_env").get<std::vector<int64_t>>();
  }
  gt.preferred.assign(gt.preference_score.a.size(), 0);
  for (std::size_t i = 0; i < gt.preferred.size(); ++i) {
    gt.preferred[i] = gt.preference_score.a[i] >= gt.threshold ? 1 : 0;
  }
  return gt;
}

}  // namespace cnsdiff
