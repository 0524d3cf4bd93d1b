#include "cnsdiff/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cnsdiff/common.hpp"
#include "cnsdiff/corpus.hpp"
#include "cnsdiff/eval.hpp"
#include "cnsdiff/gradcheck.hpp"
#include "cnsdiff/sha256.hpp"
#include "cnsdiff/splits.hpp"
#include "cnsdiff/trainer.hpp"
#include "cnsdiff/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cnsdiff {

namespace {

std::string resolve_data_path(const std::string& path) {
  if (path.empty() || fs::exists(path)) return path;
  if (const char* root = std::getenv("CNSDIFF_DATA_ROOT")) {
    fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hash_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  Sha256 h;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

// One run owns one run directory.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : lock_path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(lock_path_.c_str(), "wx");
    if (!f) {
      throw std::runtime_error("run directory is locked by another run: " +
                               lock_path_.string());
    }
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }

 private:
  fs::path lock_path_;
};

LoadSchema parse_schema(const std::string& spec) {
  LoadSchema s;
  if (spec.empty()) return s;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("schema entries must be key=column: " + part);
    std::string key = part.substr(0, eq), col = part.substr(eq + 1);
    if (key == "user_id") s.user_col = col;
    else if (key == "item_id") s.item_col = col;
    else if (key == "timestamp") s.time_col = col;
    else if (key == "rating") s.rating_col = col;
    else throw ConfigError("unknown schema key: " + key);
  }
  return s;
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec base;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("num_users", base.num_users);
  get("num_items", base.num_items);
  get("num_envs", base.num_envs);
  get("preference_rank", base.preference_rank);
  get("preference_keep_frac", base.preference_keep_frac);
  get("seed", base.seed);
  if (j.contains("env_probs")) base.env_probs = j.at("env_probs").get<std::vector<double>>();
  if (!j.contains("exposure")) throw ConfigError("synthetic spec: missing 'exposure'");
  const json& ex = j.at("exposure");
  const std::string mode = ex.at("mode").get<std::string>();
  if (mode == "uniform") {
    return make_uniform_exposure_spec(base, ex.at("phi_per_env").get<std::vector<double>>());
  }
  if (mode == "target_fnr") {
    return make_target_fnr_spec(base, ex.at("eta_per_env").get<std::vector<double>>());
  }
  if (mode == "item_affinity") {
    return make_item_affinity_spec(base, ex.at("phi_favored").get<double>(),
                                   ex.at("phi_other").get<double>(),
                                   ex.value("affinity_seed", base.seed));
  }
  throw ConfigError("synthetic spec: unknown exposure mode " + mode);
}

std::vector<RawInteraction> load_raw_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open exposure-test file: " + path);
  std::vector<RawInteraction> out;
  std::string line;
  std::getline(in, line);  // header: user_id,item_id[,timestamp[,rating]]
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    RawInteraction r;
    std::string f;
    std::getline(ss, r.user_id, ',');
    std::getline(ss, r.item_id, ',');
    if (std::getline(ss, f, ',')) r.timestamp = std::stoll(f);
    if (std::getline(ss, f, ',')) r.rating = std::stof(f);
    out.push_back(std::move(r));
  }
  return out;
}

void write_grouped_csv(const fs::path& path, const GroupedReport& rep) {
  std::ofstream out(path);
  out << "group,metric,value,support\n";
  for (int g = 0; g < rep.num_groups; ++g) {
    const auto& mb = rep.metrics[g];
    for (std::size_t ki = 0; ki < mb.ks.size(); ++ki) {
      out << g << ",recall@" << mb.ks[ki] << ',' << mb.recall[ki] << ',' << rep.gt_support[g]
          << "\n";
      out << g << ",ndcg@" << mb.ks[ki] << ',' << mb.ndcg[ki] << ',' << rep.gt_support[g] << "\n";
    }
    out << g << ",fhns_ratio,"
        << (std::isnan(rep.fhns[g]) ? std::string("nan") : std::to_string(rep.fhns[g])) << ','
        << rep.fhns_support[g] << "\n";
  }
}

void write_manifest(const fs::path& dir, const json& config_echo, const std::string& started,
                    const std::vector<std::string>& outputs) {
  json inventory = json::array();
  for (const auto& rel : outputs) {
    fs::path p = dir / rel;
    if (!fs::exists(p)) continue;
    inventory.push_back({{"path", rel}, {"sha256", hash_file(p)}});
  }
  json manifest = {{"version", kVersion},
                   {"config", config_echo},
                   {"started_at", started},
                   {"finished_at", iso_timestamp()},
                   {"outputs", inventory}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

struct GridAxis {
  std::string key;
  std::vector<json> values;
};

std::vector<GridAxis> parse_vary(const std::string& spec) {
  std::vector<GridAxis> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    auto eq = part.find('=');
    if (eq == std::string::npos || part.size() < eq + 3 || part[eq + 1] != '[' ||
        part.back() != ']') {
      throw ConfigError("--vary entries must look like key=[v1,v2,...]: " + part);
    }
    GridAxis axis;
    axis.key = part.substr(0, eq);
    std::string body = part.substr(eq + 2, part.size() - eq - 3);
    std::stringstream vs(body);
    std::string tok;
    while (std::getline(vs, tok, ',')) {
      try {
        axis.values.push_back(json::parse(tok));
      } catch (const json::exception&) {
        axis.values.push_back(json(tok));  // bare strings (e.g. sampler names)
      }
    }
    if (axis.values.empty()) throw ConfigError("--vary axis has no values: " + part);
    axes.push_back(std::move(axis));
  }
  if (axes.empty()) throw ConfigError("--vary produced no axes");
  return axes;
}

// --- subcommand bodies -------------------------------------------------------

int cmd_ingest(const std::string& input, const std::string& schema, int min_user, int min_item,
               double rating_threshold, const std::string& out_dir) {
  Dataset d = load_interactions(resolve_data_path(input), parse_schema(schema), min_user,
                                min_item, rating_threshold);
  save_dataset(out_dir, d);
  std::cout << "ingested " << d.interactions.size() << " interactions, M=" << d.num_users
            << " N=" << d.num_items << " -> " << out_dir << "\n";
  return 0;
}

int cmd_split(const std::string& data_dir, const std::string& kind, double ood_fraction,
              uint64_t seed, const std::string& exposure_file, const std::string& merged_out,
              const std::string& out_path) {
  Dataset d = load_dataset(resolve_data_path(data_dir));
  ShiftKind sk = shift_kind_from_string(kind);
  SplitBundle bundle;
  if (sk == ShiftKind::exposure) {
    if (exposure_file.empty()) throw ConfigError("--exposure-test is required for kind=exposure");
    auto raw = load_raw_interactions(resolve_data_path(exposure_file));
    auto [merged, b] = build_split_exposure(d, raw, {7, 1, 2}, seed);
    bundle = std::move(b);
    if (merged_out.empty()) {
      throw ConfigError("--merged-out is required for kind=exposure (the OOD rows extend the dataset)");
    }
    save_dataset(merged_out, merged);
  } else {
    bundle = build_split(d, sk, {7, 1, 2}, ood_fraction, seed);
  }
  save_split(out_path, bundle);
  std::cout << "split " << to_string(bundle.shift_kind) << ": train=" << bundle.train.size()
            << " val=" << bundle.val.size() << " iid=" << bundle.test_iid.size()
            << " ood=" << bundle.test_ood.size() << " -> " << out_path << "\n";
  if (bundle.single_interaction_warnings > 0) {
    std::cout << "warning: " << bundle.single_interaction_warnings
              << " users with <2 interactions were assigned wholly to train\n";
  }
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open synthetic spec: " + spec_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec parse error: ") + e.what());
  }
  SyntheticSpec spec = spec_from_json(j);
  auto [dataset, gt] = generate_synthetic(spec);
  save_dataset(out_dir, dataset);
  save_ground_truth(out_dir, gt);
  std::cout << "synthesized " << dataset.interactions.size() << " interactions, eta_hat = [";
  for (std::size_t e = 0; e < gt.eta_hat.size(); ++e) {
    std::cout << (e ? ", " : "") << gt.eta_hat[e];
  }
  std::cout << "] -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& split_path,
              const std::string& config_path, const std::string& run_dir) {
  const std::string started = iso_timestamp();
  TrainConfig cfg = load_config(config_path);
  Dataset dataset = load_dataset(resolve_data_path(data_dir));
  SplitBundle split = load_split(resolve_data_path(split_path));
  RunLock lock(run_dir);
  {
    std::ofstream out(fs::path(run_dir) / "config.json");
    out << config_to_json(cfg).dump(2) << "\n";
  }
  fs::create_directories(fs::path(run_dir) / "checkpoints");
  Trainer<float> trainer(dataset, split, cfg);
  RunReport report = trainer.fit((fs::path(run_dir) / "checkpoints").string());
  report.version = kVersion;
  write_run_report(run_dir, report);
  save_checkpoint((fs::path(run_dir) / "checkpoints" / "best.ckpt").string(),
                  trainer.best_model(), cfg.seed, report.best_epoch);
  save_checkpoint((fs::path(run_dir) / "checkpoints" / "last.ckpt").string(), trainer.model(),
                  cfg.seed, cfg.epochs);
  write_manifest(run_dir, config_to_json(cfg), started,
                 {"config.json", "metrics.json", "epochs.csv", "fhns.csv",
                  "checkpoints/best.ckpt", "checkpoints/last.ckpt"});
  std::cout << "run complete: best epoch " << report.best_epoch << ", OOD recall@20 = "
            << report.final_ood.recall[1] << " -> " << run_dir << "\n";
  return 0;
}

std::pair<std::string, int> parse_groups(const std::string& spec) {
  auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("--groups must look like popularity:4");
  std::string kind = spec.substr(0, colon);
  int n = std::stoi(spec.substr(colon + 1));
  if (kind != "popularity" && kind != "env") throw ConfigError("--groups kind must be popularity or env");
  if (n < 1) throw ConfigError("--groups count must be >= 1");
  return {kind, n};
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split_path, const std::string& groups,
             const std::string& out_dir) {
  Dataset dataset = load_dataset(resolve_data_path(data_dir));
  SplitBundle split = load_split(resolve_data_path(split_path));
  Model<float> model = load_checkpoint(resolve_data_path(ckpt_path));
  if (model.dims.num_users != dataset.num_users || model.dims.num_items != dataset.num_items) {
    throw std::runtime_error("checkpoint shape does not match dataset");
  }
  fs::create_directories(out_dir);
  NormGraph graph = build_graph(dataset, split);
  EmbeddingState<float> in;
  in.user_table = model.user_table;
  in.item_table = model.item_table;
  EmbeddingState<float> Z = propagate(in, graph, model.dims.K, 0);
  PositiveSet mask = PositiveSet::from_split(dataset, split.train);
  auto iid_gt = ground_truth_lists(dataset, split.test_iid);
  auto ood_gt = ground_truth_lists(dataset, split.test_ood);
  MetricBlock iid = rank_metrics(Z, iid_gt, mask, {10, 20});
  MetricBlock ood = rank_metrics(Z, ood_gt, mask, {10, 20});
  json out = {{"version", kVersion}, {"final", json::array()}};
  auto block = [](const MetricBlock& mb, const char* name) {
    json j = {{"split", name}, {"users", mb.num_evaluated_users}};
    for (std::size_t i = 0; i < mb.ks.size(); ++i) {
      j["recall@" + std::to_string(mb.ks[i])] = mb.recall[i];
      j["ndcg@" + std::to_string(mb.ks[i])] = mb.ndcg[i];
    }
    return j;
  };
  out["final"].push_back(block(iid, "iid"));
  out["final"].push_back(block(ood, "ood"));
  {
    std::ofstream f(fs::path(out_dir) / "eval_metrics.json");
    f << out.dump(2) << "\n";
  }
  if (!groups.empty()) {
    auto [kind, n] = parse_groups(groups);
    std::vector<int32_t> item_group;
    int num_groups = n;
    if (kind == "popularity") {
      item_group = popularity_buckets(dataset, n);
    } else {
      EnvAssignment env = assign_envs(dataset, &split, EnvMode::popularity_quantile, n);
      item_group = env.item_env;
    }
    std::vector<int32_t> test_all = split.test_iid;
    test_all.insert(test_all.end(), split.test_ood.begin(), split.test_ood.end());
    auto gt = ground_truth_lists(dataset, test_all);
    FhnsConfig fc;
    GroupedReport rep = grouped_report(Z, gt, mask, {10, 20}, item_group, num_groups, nullptr,
                                       nullptr, nullptr, nullptr, fc);
    write_grouped_csv(fs::path(out_dir) / "grouped.csv", rep);
  }
  std::cout << "eval: iid recall@20=" << iid.recall[1] << " ood recall@20=" << ood.recall[1]
            << " -> " << out_dir << "\n";
  return 0;
}

int cmd_diagnose(const std::string& run_dir, const std::string& data_dir,
                 const std::string& split_path, const std::string& groups) {
  TrainConfig cfg = load_config((fs::path(run_dir) / "config.json").string());
  Dataset dataset = load_dataset(resolve_data_path(data_dir));
  SplitBundle split = load_split(resolve_data_path(split_path));

  std::vector<fs::path> ckpts;
  for (const auto& entry : fs::directory_iterator(fs::path(run_dir) / "checkpoints")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) == 0) ckpts.push_back(entry.path());
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw std::runtime_error("no epoch checkpoints under " + run_dir);

  NormGraph graph = build_graph(dataset, split);
  EnvAssignment env = assign_envs(dataset, &split, env_mode_from_string(cfg.env_mode),
                                  cfg.num_envs, nullptr, cfg.env_uniform_prior);
  NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  PositiveSet mask = PositiveSet::from_split(dataset, split.train);
  std::vector<int32_t> test_all = split.test_iid;
  test_all.insert(test_all.end(), split.test_ood.begin(), split.test_ood.end());
  auto test_items = ground_truth_lists(dataset, test_all);
  FhnsConfig fc{cfg.fhns_tau_sim};

  std::ofstream curve(fs::path(run_dir) / "fhns_recomputed.csv");
  curve << "epoch,ratio\n";
  const SamplerKind kind = sampler_kind_from_string(cfg.sampler);
  for (const auto& path : ckpts) {
    int epoch = 0;
    Model<float> model = load_checkpoint(path.string(), nullptr, &epoch);
    Trainer<float> trainer(dataset, split, cfg);
    trainer.model() = model;
    // A seeded probe batch regenerates the epoch's negatives.
    std::vector<int32_t> ids;
    Rng rng(batch_seed(cfg.seed, RngStream::shuffle, static_cast<uint64_t>(epoch), 9999));
    const std::size_t probe = std::min<std::size_t>(split.train.size(), 2048);
    for (std::size_t i = 0; i < probe; ++i) {
      ids.push_back(split.train[rng.uniform_below(split.train.size())]);
    }
    EmbeddingState<float> in;
    in.user_table = model.user_table;
    in.item_table = model.item_table;
    EmbeddingState<float> Z = propagate(in, graph, cfg.K, cfg.threads);
    const EmbeddingState<float>* dns_ptr = kind == SamplerKind::dns ? &Z : nullptr;
    Batch<float> batch = trainer.prepare_batch(ids, std::max(epoch, 1), 9999, dns_ptr);
    BatchStats<float> stats;
    LossConfig lcfg = trainer.loss_config(std::max(epoch, 1));
    total_loss_and_grads(model, graph, sched, env.prior, batch, lcfg, nullptr, &stats);
    double ratio = fhns_ratio(stats.used_negatives, stats.users, stats.item_embeddings,
                              test_items, fc);
    curve << epoch << ',' << ratio << "\n";
  }

  // Grouped report on the best checkpoint, generated negatives attributed to
  // item groups.
  {
    Model<float> model =
        load_checkpoint((fs::path(run_dir) / "checkpoints" / "best.ckpt").string());
    Trainer<float> trainer(dataset, split, cfg);
    trainer.model() = model;
    EmbeddingState<float> in;
    in.user_table = model.user_table;
    in.item_table = model.item_table;
    EmbeddingState<float> Z = propagate(in, graph, cfg.K, cfg.threads);
    std::vector<int32_t> ids;
    Rng rng(batch_seed(cfg.seed, RngStream::shuffle, 424242, 9999));
    const std::size_t probe = std::min<std::size_t>(split.train.size(), 2048);
    for (std::size_t i = 0; i < probe; ++i) {
      ids.push_back(split.train[rng.uniform_below(split.train.size())]);
    }
    const EmbeddingState<float>* dns_ptr = kind == SamplerKind::dns ? &Z : nullptr;
    Batch<float> batch = trainer.prepare_batch(ids, 1, 9999, dns_ptr);
    BatchStats<float> stats;
    LossConfig lcfg = trainer.loss_config(1);
    total_loss_and_grads(model, graph, sched, env.prior, batch, lcfg, nullptr, &stats);
    int num_groups = 4;
    std::string kind_name = "popularity";
    if (!groups.empty()) std::tie(kind_name, num_groups) = parse_groups(groups);
    std::vector<int32_t> item_group = popularity_buckets(dataset, num_groups);
    GroupedReport rep =
        grouped_report(Z, test_items, mask, {10, 20}, item_group, num_groups,
                       &stats.used_negatives, &stats.users, &stats.used_negative_items,
                       &test_items, fc);
    write_grouped_csv(fs::path(run_dir) / "grouped.csv", rep);
  }
  std::cout << "diagnose: wrote fhns_recomputed.csv and grouped.csv under " << run_dir << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  TrainConfig cfg = config_path.empty() ? tiny_gradcheck_config() : load_config(config_path);
  GradCheckReport rep = full_model_gradcheck(cfg);
  std::printf("%-22s %12s %12s %8s\n", "tensor", "worst_rel", "worst_abs", "entries");
  for (const auto& t : rep.tensors) {
    std::printf("%-22s %12.3e %12.3e %8zu\n", t.name.c_str(), t.worst_rel, t.worst_abs,
                t.entries);
  }
  std::printf("max relative error: %.3e (%s)\n", rep.worst_rel, rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 1;
}

int cmd_grid(const std::string& config_path, const std::string& vary, const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file: " + config_path);
  json base;
  try {
    base = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  config_from_json(base);  // validate the base before expanding
  auto axes = parse_vary(vary);
  fs::create_directories(out_dir);
  std::vector<std::size_t> idx(axes.size(), 0);
  int count = 0;
  for (;;) {
    json cfg = base;
    for (std::size_t a = 0; a < axes.size(); ++a) cfg[axes[a].key] = axes[a].values[idx[a]];
    config_from_json(cfg);  // reject unknown keys / invalid values
    char name[32];
    std::snprintf(name, sizeof(name), "grid_%04d.json", count);
    std::ofstream out(fs::path(out_dir) / name);
    out << cfg.dump(2) << "\n";
    ++count;
    std::size_t a = 0;
    while (a < axes.size()) {
      idx[a] += 1;
      if (idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      ++a;
    }
    if (a == axes.size()) break;
  }
  std::cout << "wrote " << count << " configs to " << out_dir << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"CNSDiff: diffusion-based causal negative sampling for OOD recommendation"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load a raw interaction CSV into a dataset dir");
  std::string in_path, in_schema, in_out;
  int min_user = 0, min_item = 0;
  double rating_threshold = 0.0;
  ingest->add_option("--input", in_path)->required();
  ingest->add_option("--schema", in_schema);
  ingest->add_option("--min-user", min_user);
  ingest->add_option("--min-item", min_item);
  ingest->add_option("--rating-threshold", rating_threshold);
  ingest->add_option("--out", in_out)->required();

  // split
  auto* split = app.add_subcommand("split", "construct train/val/iid/ood splits");
  std::string sp_data, sp_kind = "popularity", sp_exposure, sp_merged, sp_out;
  double sp_ood = 0.2;
  uint64_t sp_seed = 42;
  split->add_option("--data", sp_data)->required();
  split->add_option("--kind", sp_kind);
  split->add_option("--ood-fraction", sp_ood);
  split->add_option("--seed", sp_seed);
  split->add_option("--exposure-test", sp_exposure);
  split->add_option("--merged-out", sp_merged);
  split->add_option("--out", sp_out)->required();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic confounded dataset");
  std::string sy_spec, sy_out;
  synth->add_option("--spec", sy_spec)->required();
  synth->add_option("--out", sy_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train a model and write run artifacts");
  std::string tr_data, tr_split, tr_config, tr_out;
  train->add_option("--data", tr_data)->required();
  train->add_option("--split", tr_split)->required();
  train->add_option("--config", tr_config)->required();
  train->add_option("--out", tr_out)->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split, ev_groups, ev_out;
  evalc->add_option("--checkpoint", ev_ckpt)->required();
  evalc->add_option("--data", ev_data)->required();
  evalc->add_option("--split", ev_split)->required();
  evalc->add_option("--groups", ev_groups);
  evalc->add_option("--out", ev_out)->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "recompute FHNS curves from a checkpoint series");
  std::string dg_run, dg_data, dg_split, dg_groups;
  diag->add_option("--run", dg_run)->required();
  diag->add_option("--data", dg_data)->required();
  diag->add_option("--split", dg_split)->required();
  diag->add_option("--groups", dg_groups);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  std::string gc_config;
  gc->add_option("--config", gc_config);

  // grid
  auto* grid = app.add_subcommand("grid", "expand hyperparameter grids into config files");
  std::string gr_config, gr_vary, gr_out = "grid";
  grid->add_option("--config", gr_config)->required();
  grid->add_option("--vary", gr_vary)->required();
  grid->add_option("--out", gr_out);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_path, in_schema, min_user, min_item, rating_threshold, in_out);
    if (*split) return cmd_split(sp_data, sp_kind, sp_ood, sp_seed, sp_exposure, sp_merged, sp_out);
    if (*synth) return cmd_synth(sy_spec, sy_out);
    if (*train) return cmd_train(tr_data, tr_split, tr_config, tr_out);
    if (*evalc) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_groups, ev_out);
    if (*diag) return cmd_diagnose(dg_run, dg_data, dg_split, dg_groups);
    if (*gc) return cmd_gradcheck(gc_config);
    if (*grid) return cmd_grid(gr_config, gr_vary, gr_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cnsdiff
