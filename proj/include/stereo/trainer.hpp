#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "stereo/adam.hpp"
#include "stereo/loss.hpp"
#include "stereo/network.hpp"
#include "stereo/synth.hpp"

namespace stereo {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 2;        // gradient accumulation; batch norm still sees one
                             // sample at a time
  real learning_rate = real(1e-3);
  int crop_h = 64, crop_w = 64;
  std::uint64_t seed = 0;
  LossWeights weights;
  int eval_every = 1;        // epochs between held-out evaluations
  std::string checkpoint_path;  // best-EPE checkpoint; empty = don't write
  void validate() const;     // batch >= 1, crops divisible by 8, epochs >= 1
};

struct StageMetrics {
  real epe = 0;              // mean |pred - gt| in px
  real gt1 = 0, gt2 = 0, gt3 = 0;  // > n px rates, percent
};

// All disparity metrics run over gt-valid, non-excluded pixels; occlusion
// precision/recall over all pixels at a 0.5 probability cut (degenerate
// denominators report 100). Normal error compares surface normals of the
// final disparity's depth against ground truth, averaged per sample.
struct MetricReport {
  std::vector<StageMetrics> stage;  // d^1..d^K
  StageMetrics refined;
  bool has_refined = false;
  real occ_precision = 100, occ_recall = 100;
  bool has_occlusion = false;
  real normal_error_deg = 0;
  i64 pixels = 0;  // masked-domain size summed over the set

  const StageMetrics& final_stage() const { return has_refined ? refined : stage.back(); }
  std::string csv() const;
};

// Per-sample predictions in a network-independent form so the metric suite
// can be fed by the real model, a constant baseline, or the ground truth.
struct SamplePrediction {
  std::vector<DisparityField> stages;  // left view
  DisparityField refined;
  bool has_refined = false;
  OcclusionMap occlusion;
  bool has_occlusion = false;
};

MetricReport compute_metrics(const std::vector<SamplePrediction>& preds,
                             const std::vector<StereoSample>& gt);

struct TrainResult {
  std::vector<real> step_loss;  // per optimizer step, batch-averaged
  std::vector<real> eval_epe;   // one entry per held-out evaluation
  real best_epe = std::numeric_limits<real>::infinity();
  bool diverged = false;        // non-finite loss stopped training
  int steps = 0;
};

// Adam training loop. Deterministic for a fixed seed and thread count. Pass
// an AdamState and start_epoch to resume; a resumed run reproduces the
// uninterrupted loss curve. A non-finite loss aborts (the best checkpoint on
// disk is untouched). `log` receives line-delimited step and eval records.
TrainResult fit(DilatedStereoNet& net, const std::vector<StereoSample>& train,
                const std::vector<StereoSample>& eval_set, const TrainConfig& cfg,
                AdamState* opt = nullptr, int start_epoch = 0,
                std::ostream* log = nullptr);

// Frozen-model metric pass (per-sample batch-norm statistics).
MetricReport evaluate(DilatedStereoNet& net, const std::vector<StereoSample>& eval_set);

// Identically windowed crop of every field of a sample; rectified disparity
// is invariant to a shared crop.
StereoSample crop_sample(const StereoSample& s, int y0, int x0, int h, int w);

CameraRig default_rig(int H, int W);

// count synthetic scenes with per-index seeds derived from `seed`.
std::vector<StereoSample> make_dataset(std::uint64_t seed, int count, int H, int W,
                                       int max_disparity, const CameraRig& rig,
                                       bool integer_disparity = false,
                                       real reflective_fraction = real(0.15));

struct AblationRow {
  std::string name;
  MetricReport report;
};

// Trains each variant from the shared seed and schedule, then evaluates.
std::vector<AblationRow> ablation_sweep(
    const std::vector<std::pair<std::string, NetworkConfig>>& variants,
    const std::vector<StereoSample>& train, const std::vector<StereoSample>& eval_set,
    const TrainConfig& cfg, std::ostream* log = nullptr);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace stereo
