#pragma once

#include <memory>
#include <string>

#include "stereo/geometry.hpp"
#include "stereo/nn.hpp"

namespace stereo {

// One knob set covers the paper-size network and the desk-scale toy; the
// ablation toggles are plain fields so sweeps are config changes, not forks.
struct NetworkConfig {
  int feature_width = 8;                     // F
  std::array<int, 3> repeats{2, 4, 2};       // residual blocks per width group
  int max_disparity = 32;                    // D
  std::vector<int> pool_grids{3, 5, 15};     // spatial-pooling average grids
  std::vector<int> pool_rates{3, 5, 15};     // matching branch dilations
  std::vector<int> filter_dilations{1, 2, 4};
  std::vector<int> refine_dilations{1, 2, 4, 8, 1, 1};
  int stages = 3;                            // K
  bool refinement = true;
  bool use_photometric = true;               // feed E_p to the refinement head
  bool use_geometric = true;                 // feed E_g to the refinement head
  bool pyramid_pooling = false;              // 1x1 branch convs instead of dilated 3x3
  bool stop_gradient_refinement = false;     // cut grads from refinement into the trunk

  void validate() const;
  static NetworkConfig toy();
  static NetworkConfig paper_size();  // F=32, repeats 3/15/6, D=192
};

struct ModelOutput {
  std::vector<DisparityField> disp_left;   // d^k, k = 1..K
  std::vector<DisparityField> disp_right;
  DisparityField refined;                  // left view; defined iff refinement on
  OcclusionMap occlusion;                  // defined iff refinement on
  Tensor e_p, e_g;                         // refinement inputs, exposed
};

class DilatedStereoNet {
 public:
  DilatedStereoNet(const NetworkConfig& cfg, std::uint64_t seed);
  ~DilatedStereoNet();
  DilatedStereoNet(DilatedStereoNet&&) noexcept;
  DilatedStereoNet& operator=(DilatedStereoNet&&) noexcept;

  const NetworkConfig& config() const;

  // image [1,3,H,W] (normalized), H and W divisible by 4 -> [1,F,H/4,W/4].
  Tensor features(const Tensor& image, BnMode mode);
  // concatenated both-view cost [1,2F,D/4,H/4,W/4] -> K volumes [1,2,D/4,H/4,W/4].
  std::vector<Tensor> cost_filter(const Tensor& cost, BnMode mode);
  // full-resolution inputs -> (refined disparity [H,W], occlusion [H,W]).
  std::pair<Tensor, Tensor> refinement_head(const Tensor& image, const Tensor& disp,
                                            const Tensor& e_p, const Tensor& e_g,
                                            BnMode mode);
  // left/right normalized images [1,3,H,W], extents divisible by 8.
  ModelOutput forward(const Tensor& left, const Tensor& right, BnMode mode);

  std::vector<Tensor>& parameters();
  const std::vector<std::string>& parameter_names() const;

  // Analytic multiply-accumulate audit for one stereo pair at H x W.
  MacCount count_macs(int H, int W) const;

  // Bit-exact binary checkpoint (weights + batch-norm state + config echo).
  void save(const std::string& path) const;
  static DilatedStereoNet load(const std::string& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// MACs of a non-dilated stride-1 filtering stack at cost-volume resolution
// with the same receptive field as the network's filtering trunk — the
// honest baseline for the dilated-filter cost claim.
MacCount count_macs_equal_rf_filter(const NetworkConfig& cfg, int H, int W);

}  // namespace stereo
