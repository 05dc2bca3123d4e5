#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "stereo/tensor.hpp"

namespace stereo {

// Central finite-difference check. `forward` must rebuild the graph from the
// given leaves on every call and return a scalar. Returns the max relative
// error between analytic and numeric gradients over all leaf elements.
real gradcheck_max_rel_error(const std::function<Tensor()>& forward,
                             std::vector<Tensor> leaves, real h = real(1e-5));

struct GradCheckResult {
  std::string name;
  real max_rel_err;
  bool pass;
};

// Finite-difference suite over every differentiable op, one entry per op
// variant. Threshold 1e-4 relative error at 64-bit.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace stereo
