#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

namespace cnsdiff {

// Full run configuration. JSON parsing rejects unknown keys so hyperparameter
// typos fail loudly instead of training with a silently-ignored setting.
struct TrainConfig {
  int epochs = 200;
  int batch_size = 1024;
  double lr = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int d = 64;
  int K = 3;
  int hidden = 64;
  int time_dim = 16;
  int env_dim = 8;

  int T = 20;
  int t0 = 1;
  int stride = 0;  // 0 -> ceil(T/5)
  double beta_start = 1e-4;
  double beta_end = 0.02;

  double lambda1 = 1e-3;
  double lambda2 = 1e-3;
  double lambda3 = 1e-3;
  double tau_temp = 0.2;

  std::array<double, 2> mix_initial{2.0, 8.0};
  std::array<double, 2> mix_final{9.0, 1.0};

  std::string sampler = "cnsdiff";  // cnsdiff | random | popularity | dns
  int dns_candidates = 32;
  int dns_top_m = 1;

  int num_envs = 4;
  std::string env_mode = "popularity";  // popularity | timestamp | given
  bool env_uniform_prior = false;
  bool causal_global_kl = false;
  int warmup_epochs = 0;  // denoiser-only epochs before joint training

  uint64_t seed = 42;
  int eval_every = 5;
  double fhns_tau_sim = 0.99;
  int threads = 0;

  int effective_stride() const { return stride > 0 ? stride : (T + 4) / 5; }
  void validate() const;  // throws ConfigError with the offending field
};

TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig load_config(const std::string& path);

}  // namespace cnsdiff
