#pragma once

#include "stereo/geometry.hpp"
#include "stereo/tensor.hpp"

namespace stereo {

struct LossWeights {
  std::vector<real> stage = {real(0.2), real(0.4), real(0.6)};  // w^k
  real lambda_refine = real(1.2);
  real lambda_occlusion = real(0.3);
  real huber_delta = real(1);
  void validate() const;  // all weights >= 0, delta > 0
};

struct StageLoss {
  Tensor loss;  // scalar, mean Huber over the masked domain
  i64 valid_pixels = 0;
  real sum() const { return loss.item() * real(valid_pixels); }
};

// Huber(delta) on pred - gt over pixels that are gt-valid and, when an
// exclusion mask is given, not excluded. Normalized by the surviving pixel
// count so crop size does not rescale the learning rate.
StageLoss stage_loss(const DisparityField& pred, const DisparityField& gt,
                     const std::vector<std::uint8_t>* exclusion, real delta);

// Sum of w^k * L^k. Each entry must already cover whichever views it should.
Tensor data_loss(const std::vector<Tensor>& stage_losses, const LossWeights& w);

// Binary cross-entropy averaged over all pixels; predictions are clamped to
// [1e-7, 1-1e-7] (zero gradient once clamped).
Tensor occlusion_loss(const OcclusionMap& pred, const OcclusionMap& gt);

Tensor refinement_loss(const DisparityField& refined, const DisparityField& gt,
                       const std::vector<std::uint8_t>* exclusion, real delta);

struct LossReport {
  Tensor total;  // scalar, backward-able
  real total_value = 0;
  real data = 0;
  std::vector<real> stage;  // mean L^k
  real refine = 0;
  real occlusion = 0;
  i64 valid_pixels = 0;  // M of the masked domain (last stage)
};

// total = L_d + lambda_refine * L_r + lambda_occlusion * L_o. Pass nullptr
// for a disabled term; with both disabled the total is exactly L_d.
LossReport total_loss(const std::vector<StageLoss>& stages, const Tensor* refine,
                      const Tensor* occlusion, const LossWeights& w);

}  // namespace stereo
