#pragma once

#include <string>
#include <vector>

#include "cnsdiff/trainer.hpp"

namespace cnsdiff {

struct TensorCheck {
  std::string name;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::size_t entries = 0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double worst_rel = 0.0;
  bool pass = false;
};

// Central-difference verification of every analytic parameter gradient of the
// total loss, on a fixed tiny instance (M=4, N=6) built from the config's
// hyperparameters. The differences use only the loss forward path, so they
// are independent of the backward implementation they certify.
GradCheckReport full_model_gradcheck(const TrainConfig& cfg, int batch_size = 4,
                                     double fd_step = 1e-5, double rel_tol = 1e-4,
                                     double abs_tol = 1e-6);

// The instance the acceptance gate runs: d=8, two environments, T=4 with
// three candidate steps, tanh MLP of width 16.
TrainConfig tiny_gradcheck_config();

}  // namespace cnsdiff
