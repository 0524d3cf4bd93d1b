#include "cnsdiff/gradcheck.hpp"

#include <cmath>

namespace cnsdiff {

TrainConfig tiny_gradcheck_config() {
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  c.d = 8;
  c.K = 2;
  c.hidden = 16;
  c.time_dim = 8;
  c.env_dim = 4;
  c.T = 4;
  c.t0 = 2;
  c.stride = 1;  // candidate steps {2, 3, 4}
  c.lambda1 = 0.05;
  c.lambda2 = 0.3;
  c.lambda3 = 0.2;
  c.tau_temp = 0.5;
  c.num_envs = 2;
  c.sampler = "cnsdiff";
  c.seed = 7;
  c.threads = 1;
  return c;
}

namespace {

// Deterministic toy dataset: 4 users x 6 items, a dozen interactions with
// mixed popularity so both environments are populated.
Dataset tiny_dataset() {
  Dataset d;
  d.num_users = 4;
  d.num_items = 6;
  const int32_t raw[][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 3}, {1, 4},
                            {2, 1}, {2, 2}, {2, 5}, {3, 0}, {3, 4}, {3, 5}};
  int64_t ts = 100;
  for (const auto& p : raw) {
    d.interactions.push_back({p[0], p[1], ts, 1.0f});
    ts += 10;
  }
  for (int32_t u = 0; u < d.num_users; ++u) {
    d.user_ids.push_back("u" + std::to_string(u));
    d.user_index.emplace(d.user_ids.back(), u);
  }
  for (int32_t v = 0; v < d.num_items; ++v) {
    d.item_ids.push_back("i" + std::to_string(v));
    d.item_index.emplace(d.item_ids.back(), v);
  }
  d.recount_popularity();
  return d;
}

SplitBundle all_train_split(const Dataset& d) {
  SplitBundle s;
  s.shift_kind = ShiftKind::none;
  for (int32_t i = 0; i < static_cast<int32_t>(d.interactions.size()); ++i) {
    s.train.push_back(i);
  }
  return s;
}

}  // namespace

GradCheckReport full_model_gradcheck(const TrainConfig& cfg_in, int batch_size, double fd_step,
                                     double rel_tol, double abs_tol) {
  TrainConfig cfg = cfg_in;
  cfg.threads = 1;
  Dataset dataset = tiny_dataset();
  SplitBundle split = all_train_split(dataset);
  Trainer<double> trainer(dataset, split, cfg);

  std::vector<int32_t> ids;
  for (int i = 0; i < batch_size && i < static_cast<int>(split.train.size()); ++i) {
    ids.push_back(split.train[i * 3 % split.train.size()]);
  }
  Batch<double> batch = trainer.prepare_batch(ids, 1, 0, nullptr);
  LossConfig lcfg = trainer.loss_config(1);

  Model<double>& model = trainer.model();
  Model<double> grads = zeros_like(model);
  total_loss_and_grads(model, trainer.graph(), trainer.schedule(), trainer.env().prior,
                       batch, lcfg, &grads);

  auto loss_at = [&]() {
    return total_loss(model, trainer.graph(), trainer.schedule(), trainer.env().prior,
                      batch, lcfg)
        .total;
  };

  GradCheckReport report;
  std::vector<std::pair<std::vector<double>*, std::vector<double>*>> tensors;
  std::vector<std::string> names;
  model.for_each_param([&](const char* name, std::vector<double>& t) {
    names.emplace_back(name);
    tensors.emplace_back(&t, nullptr);
  });
  {
    std::size_t i = 0;
    grads.for_each_param([&](const char*, std::vector<double>& t) {
      tensors[i].second = &t;
      ++i;
    });
  }

  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    TensorCheck tc;
    tc.name = names[ti];
    std::vector<double>& param = *tensors[ti].first;
    std::vector<double>& grad = *tensors[ti].second;
    tc.entries = param.size();
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double orig = param[i];
      const double h = fd_step * std::max(1.0, std::abs(orig));
      param[i] = orig + h;
      const double lp = loss_at();
      param[i] = orig - h;
      const double lm = loss_at();
      param[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = grad[i];
      const double abs_err = std::abs(fd - an);
      const double denom = std::max(std::abs(fd), std::abs(an));
      const double rel = abs_err <= abs_tol ? 0.0 : abs_err / std::max(denom, abs_tol);
      tc.worst_abs = std::max(tc.worst_abs, abs_err);
      if (rel > tc.worst_rel) tc.worst_rel = rel;
    }
    report.worst_rel = std::max(report.worst_rel, tc.worst_rel);
    report.tensors.push_back(std::move(tc));
  }
  report.pass = report.worst_rel < rel_tol;
  return report;
}

}  // namespace cnsdiff
