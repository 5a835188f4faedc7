#pragma once

#include "cnav/ad/tensor.hpp"

namespace cnav::ad {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are
// owned here and shape-matched to the parameters at construction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, const AdamConfig& cfg);

  // One update from the parameters' current grad buffers.
  void step();
  void zero_grad();

  int64_t step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace cnav::ad
