#pragma once

#include <cstddef>

#include "dataclone/tensor.hpp"

namespace dataclone::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction, used by the non-private training lanes.
class Adam {
 public:
  Adam(const TensorMap& schema, AdamConfig config);
  void step(TensorMap& params, const TensorMap& grads);

 private:
  AdamConfig config_;
  TensorMap m_;
  TensorMap v_;
  size_t t_ = 0;
};

}  // namespace dataclone::optim
