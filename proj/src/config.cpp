#include "cnsdiff/config.hpp"

#include <fstream>
#include <set>

#include "cnsdiff/common.hpp"

using json = nlohmann::json;

namespace cnsdiff {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config." + field + ": " + why);
  };
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(lr >= 0.0)) fail("lr", "must be >= 0");
  if (optimizer != "adam" && optimizer != "sgd") fail("optimizer", "must be adam or sgd");
  if (d < 1) fail("d", "must be >= 1");
  if (K < 0) fail("K", "must be >= 0");
  if (hidden < 1) fail("hidden", "must be >= 1");
  if (time_dim < 2) fail("time_dim", "must be >= 2");
  if (env_dim < 1) fail("env_dim", "must be >= 1");
  if (T < 1) fail("T", "must be >= 1");
  if (t0 < 1 || t0 > T) fail("t0", "must be in [1, T]");
  if (stride < 0) fail("stride", "must be >= 0");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    fail("beta_start/beta_end", "need 0 < beta_start <= beta_end < 1");
  }
  if (lambda1 < 0.0) fail("lambda1", "must be >= 0");
  if (lambda2 < 0.0) fail("lambda2", "must be >= 0");
  if (lambda3 < 0.0) fail("lambda3", "must be >= 0");
  if (!(tau_temp > 0.0)) fail("tau_temp", "must be > 0");
  if (mix_initial[0] + mix_initial[1] <= 0.0) fail("mix_initial", "weights must sum > 0");
  if (mix_final[0] + mix_final[1] <= 0.0) fail("mix_final", "weights must sum > 0");
  if (mix_initial[0] < 0.0 || mix_initial[1] < 0.0) fail("mix_initial", "must be nonnegative");
  if (mix_final[0] < 0.0 || mix_final[1] < 0.0) fail("mix_final", "must be nonnegative");
  if (sampler != "cnsdiff" && sampler != "random" && sampler != "popularity" && sampler != "dns") {
    fail("sampler", "must be one of cnsdiff|random|popularity|dns");
  }
  if (dns_candidates < 1) fail("dns_candidates", "must be >= 1");
  if (dns_top_m < 1) fail("dns_top_m", "must be >= 1");
  if (num_envs < 1) fail("num_envs", "must be >= 1");
  if (env_mode != "popularity" && env_mode != "timestamp" && env_mode != "given") {
    fail("env_mode", "must be popularity|timestamp|given");
  }
  if (warmup_epochs < 0) fail("warmup_epochs", "must be >= 0");
  if (eval_every < 1) fail("eval_every", "must be >= 1");
  if (!(fhns_tau_sim > 0.0 && fhns_tau_sim <= 1.0)) fail("fhns_tau_sim", "must be in (0,1]");
  if (threads < 0) fail("threads", "must be >= 0");
}

namespace {

template <typename T>
void get_field(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config.") + key + ": wrong type");
  }
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig c;
  std::set<std::string> seen;
  get_field(j, "epochs", c.epochs, seen);
  get_field(j, "batch_size", c.batch_size, seen);
  get_field(j, "lr", c.lr, seen);
  get_field(j, "optimizer", c.optimizer, seen);
  get_field(j, "adam_beta1", c.adam_beta1, seen);
  get_field(j, "adam_beta2", c.adam_beta2, seen);
  get_field(j, "adam_eps", c.adam_eps, seen);
  get_field(j, "d", c.d, seen);
  get_field(j, "K", c.K, seen);
  get_field(j, "hidden", c.hidden, seen);
  get_field(j, "time_dim", c.time_dim, seen);
  get_field(j, "env_dim", c.env_dim, seen);
  get_field(j, "T", c.T, seen);
  get_field(j, "t0", c.t0, seen);
  get_field(j, "stride", c.stride, seen);
  get_field(j, "beta_start", c.beta_start, seen);
  get_field(j, "beta_end", c.beta_end, seen);
  get_field(j, "lambda1", c.lambda1, seen);
  get_field(j, "lambda2", c.lambda2, seen);
  get_field(j, "lambda3", c.lambda3, seen);
  get_field(j, "tau_temp", c.tau_temp, seen);
  get_field(j, "mix_initial", c.mix_initial, seen);
  get_field(j, "mix_final", c.mix_final, seen);
  get_field(j, "sampler", c.sampler, seen);
  get_field(j, "dns_candidates", c.dns_candidates, seen);
  get_field(j, "dns_top_m", c.dns_top_m, seen);
  get_field(j, "num_envs", c.num_envs, seen);
  get_field(j, "env_mode", c.env_mode, seen);
  get_field(j, "env_uniform_prior", c.env_uniform_prior, seen);
  get_field(j, "causal_global_kl", c.causal_global_kl, seen);
  get_field(j, "warmup_epochs", c.warmup_epochs, seen);
  get_field(j, "seed", c.seed, seen);
  get_field(j, "eval_every", c.eval_every, seen);
  get_field(j, "fhns_tau_sim", c.fhns_tau_sim, seen);
  get_field(j, "threads", c.threads, seen);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) throw ConfigError("config." + it.key() + ": unknown key");
  }
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"optimizer", c.optimizer},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"d", c.d},
              {"K", c.K},
              {"hidden", c.hidden},
              {"time_dim", c.time_dim},
              {"env_dim", c.env_dim},
              {"T", c.T},
              {"t0", c.t0},
              {"stride", c.stride},
              {"beta_start", c.beta_start},
              {"beta_end", c.beta_end},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"lambda3", c.lambda3},
              {"tau_temp", c.tau_temp},
              {"mix_initial", c.mix_initial},
              {"mix_final", c.mix_final},
              {"sampler", c.sampler},
              {"dns_candidates", c.dns_candidates},
              {"dns_top_m", c.dns_top_m},
              {"num_envs", c.num_envs},
              {"env_mode", c.env_mode},
              {"env_uniform_prior", c.env_uniform_prior},
              {"causal_global_kl", c.causal_global_kl},
              {"warmup_epochs", c.warmup_epochs},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"fhns_tau_sim", c.fhns_tau_sim},
              {"threads", c.threads}};
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace cnsdiff
