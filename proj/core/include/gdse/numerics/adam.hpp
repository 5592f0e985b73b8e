#pragma once

#include <cstddef>
#include <vector>

#include "gdse/numerics/tape.hpp"

namespace gdse {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 gradient-norm clip; <= 0 disables.
  double clip_norm = 0.0;
};

// Adam with bias correction. Moments are zero-initialized per parameter.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);

  // Applies one update from the gradients stored in the params, then zeroes
  // them. Returns the pre-clip global gradient norm.
  double step();
  void zero_grad();

  std::size_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr);

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace gdse
