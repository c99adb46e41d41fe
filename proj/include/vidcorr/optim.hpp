#pragma once

#include <cstdint>
#include <vector>

#include "vidcorr/tensor.hpp"

namespace vidcorr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool cosine = true;          // half-period cosine decay over total_steps
  std::int64_t total_steps = 0;  // required when cosine is set
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, const AdamConfig& config);

  // Applies one update from the accumulated grads, then clears them.
  void step();

  double current_lr() const;
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace vidcorr
