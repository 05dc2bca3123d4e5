#pragma once

#include "stereo/tensor.hpp"

namespace stereo {

struct AdamState {
  real lr = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
  i64 step = 0;
  std::vector<std::vector<real>> m1;  // first moments, one buffer per parameter
  std::vector<std::vector<real>> m2;  // second moments
};

// Standard bias-corrected Adam update over the parameter list. Every
// parameter must carry a populated gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace stereo
