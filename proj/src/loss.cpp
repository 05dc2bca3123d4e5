#include "stereo/loss.hpp"

#include <algorithm>
#include <cmath>

namespace stereo {

void LossWeights::validate() const {
  for (real w : stage)
    if (!(w >= 0)) fail_config("stage weights must be non-negative");
  if (!(lambda_refine >= 0) || !(lambda_occlusion >= 0))
    fail_config("loss term weights must be non-negative");
  if (!(huber_delta > 0)) fail_config("Huber delta must be positive");
}

StageLoss stage_loss(const DisparityField& pred, const DisparityField& gt,
                     const std::vector<std::uint8_t>* exclusion, real delta) {
  if (!same_shape(pred.disp, gt.disp))
    fail_shape("stage loss shapes differ: " + shape_str(pred.disp.shape()) + " vs " +
               shape_str(gt.disp.shape()));
  if (!(delta > 0)) fail_config("Huber delta must be positive");
  const size_t n = gt.valid.size();
  if (exclusion && exclusion->size() != n)
    fail_shape("exclusion mask size does not match the disparity field");
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n, 0);
  i64 m = 0;
  for (size_t i = 0; i < n; ++i) {
    const bool keep = gt.valid[i] && (!exclusion || !(*exclusion)[i]);
    (*mask)[i] = keep ? 1 : 0;
    m += keep;
  }
  if (m == 0) fail_state("stage loss has no valid pixels");

  const auto& pv = pred.disp.values();
  const auto& gv = gt.disp.values();
  auto target = std::make_shared<std::vector<real>>(gv);
  std::vector<real> terms;
  terms.reserve(static_cast<size_t>(m));
  for (size_t i = 0; i < n; ++i) {
    if (!(*mask)[i]) continue;
    const real r = std::abs(pv[i] - gv[i]);
    terms.push_back(r <= delta ? real(0.5) * r * r
                               : delta * (r - real(0.5) * delta));
  }
  const real mean = pairwise_sum(terms) / real(m);
  Tensor loss = make_op({}, {mean}, {pred.disp},
                        [mask, target, delta, m](TensorImpl& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          p.ensure_grad();
                          const real g = self.g[0] / real(m);
                          for (size_t i = 0; i < mask->size(); ++i) {
                            if (!(*mask)[i]) continue;
                            const real r = p.v[i] - (*target)[i];
                            const real d = std::abs(r) <= delta
                                               ? r
                                               : (r > 0 ? delta : -delta);
                            p.g[i] += g * d;
                          }
                        });
  return {std::move(loss), m};
}

Tensor data_loss(const std::vector<Tensor>& stage_losses, const LossWeights& w) {
  w.validate();
  if (stage_losses.empty()) fail_config("data loss needs at least one stage");
  if (stage_losses.size() > w.stage.size())
    fail_config("more stage losses than stage weights");
  Tensor acc = scale(stage_losses[0], w.stage[0]);
  for (size_t k = 1; k < stage_losses.size(); ++k)
    acc = add(acc, scale(stage_losses[k], w.stage[k]));
  return acc;
}

Tensor occlusion_loss(const OcclusionMap& pred, const OcclusionMap& gt) {
  if (!same_shape(pred.prob, gt.prob))
    fail_shape("occlusion maps must match in shape");
  const real eps = real(1e-7);
  const auto& pv = pred.prob.values();
  auto target = std::make_shared<std::vector<real>>(gt.prob.values());
  const size_t n = pv.size();
  std::vector<real> terms(n);
  for (size_t i = 0; i < n; ++i) {
    const real y = std::clamp(pv[i], eps, real(1) - eps);
    terms[i] = -((*target)[i] * std::log(y) +
                 (real(1) - (*target)[i]) * std::log(real(1) - y));
  }
  const real mean = pairwise_sum(terms) / real(n);
  return make_op({}, {mean}, {pred.prob}, [target, eps, n](TensorImpl& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const real g = self.g[0] / real(n);
    for (size_t i = 0; i < n; ++i) {
      if (p.v[i] < eps || p.v[i] > real(1) - eps) continue;  // clamped: flat
      p.g[i] += g * (-(*target)[i] / p.v[i] +
                     (real(1) - (*target)[i]) / (real(1) - p.v[i]));
    }
  });
}

Tensor refinement_loss(const DisparityField& refined, const DisparityField& gt,
                       const std::vector<std::uint8_t>* exclusion, real delta) {
  return stage_loss(refined, gt, exclusion, delta).loss;
}

LossReport total_loss(const std::vector<StageLoss>& stages, const Tensor* refine,
                      const Tensor* occlusion, const LossWeights& w) {
  w.validate();
  std::vector<Tensor> stage_tensors;
  LossReport rep;
  for (const auto& s : stages) {
    stage_tensors.push_back(s.loss);
    rep.stage.push_back(s.loss.item());
  }
  if (!stages.empty()) rep.valid_pixels = stages.back().valid_pixels;
  Tensor total = data_loss(stage_tensors, w);
  rep.data = total.item();
  if (refine) {
    rep.refine = refine->item();
    total = add(total, scale(*refine, w.lambda_refine));
  }
  if (occlusion) {
    rep.occlusion = occlusion->item();
    total = add(total, scale(*occlusion, w.lambda_occlusion));
  }
  rep.total_value = total.item();
  // a non-finite total is reported, not thrown: the training loop is the
  // layer that decides how to abort on divergence
  const real recompose = rep.data + w.lambda_refine * rep.refine +
                         w.lambda_occlusion * rep.occlusion;
  if (std::isfinite(rep.total_value) &&
      std::abs(recompose - rep.total_value) > real(1e-9))
    fail_state("loss report does not recompose");
  rep.total = std::move(total);
  return rep;
}

}  // namespace stereo
