#include <cmath>

#include "stereo/adam.hpp"

namespace stereo {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m1.empty()) {
    state.m1.resize(params.size());
    state.m2.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m1[i].assign(params[i].values().size(), real(0));
      state.m2[i].assign(params[i].values().size(), real(0));
    }
  }
  if (state.m1.size() != params.size()) fail_state("adam state does not match parameter list");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) fail_state("adam_step: parameter " + std::to_string(i) +
                                          " has no populated gradient");
    if (state.m1[i].size() != params[i].values().size())
      fail_state("adam moment buffer shape mismatch");
  }

  state.step += 1;
  const real c1 = real(1) - std::pow(state.beta1, real(state.step));
  const real c2 = real(1) - std::pow(state.beta2, real(state.step));

  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<real>& w = params[i].values();
    const std::vector<real>& g = params[i].grad();
    std::vector<real>& m = state.m1[i];
    std::vector<real>& v = state.m2[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (real(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (real(1) - state.beta2) * g[j] * g[j];
      const real mhat = m[j] / c1;
      const real vhat = v[j] / c2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace stereo
