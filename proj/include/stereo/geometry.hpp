#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "stereo/tensor.hpp"

namespace stereo {

enum class View { kLeft, kRight };

// Rigid transform, world <- camera. Row-major 3x3 rotation.
struct Pose {
  std::array<real, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<real, 3> t{0, 0, 0};

  std::array<real, 3> apply(const std::array<real, 3>& p) const;
  std::array<real, 3> apply_inverse(const std::array<real, 3>& p) const;
  void validate() const;  // orthonormal within 1e-9
};

// Rectified pinhole rig: left camera at the pose origin, right camera offset
// by +baseline along the camera x axis.
struct CameraRig {
  real focal = 0;     // pixels
  real baseline = 0;  // meters
  real cx = 0, cy = 0;
  void validate() const;
};

// Dense per-pixel disparity (full-resolution pixels) with validity mask.
struct DisparityField {
  Tensor disp;  // [H,W]
  std::vector<std::uint8_t> valid;
  View view = View::kLeft;

  int height() const { return disp.dim(0); }
  int width() const { return disp.dim(1); }
  static DisparityField dense(Tensor disp, View view);
};

// Convention: occluded = 1. Prediction carries probabilities, ground truth
// carries {0,1}.
struct OcclusionMap {
  Tensor prob;  // [H,W]
};

// Per-view matching cost at quarter resolution. Values are stored
// network-ready as [1, channels, D/4, H', W']; at(s,y,x,c) exposes the
// (shift, row, column, channel) view of the same data.
struct CostVolume {
  Tensor vol;
  int max_disparity = 0;  // full-resolution pixels
  View view = View::kLeft;
  std::vector<std::uint8_t> in_range;  // [D/4, H', W'], 0 where the shifted sample fell outside

  int levels() const { return vol.dim(2); }
  real at(int shift, int y, int x, int c) const;
};

// feat_* are [1,C,H',W'] quarter-resolution feature maps. Left volume at
// shift s holds feat_l(x) - feat_r(x-s); right volume feat_r(x) - feat_l(x+s).
std::pair<CostVolume, CostVolume> build_cost_volume(const Tensor& feat_left,
                                                    const Tensor& feat_right,
                                                    int max_disparity);

// Soft argmax over a full-resolution cost tensor [D,H,W]:
// d(i) = sum_d d * softmax(-C_i)(d), 0-based d in {0..D-1}.
DisparityField soft_argmax_disparity(const Tensor& cost);

// output(x) = source(x - disp(x)) with linear interpolation along the row.
// Out-of-range samples are border-clamped in value and reported invalid.
// source is [C,H,W], disp [H,W]; differentiable w.r.t. both.
Tensor warp_horizontal(const Tensor& source, const Tensor& disp,
                       std::vector<std::uint8_t>* valid_out = nullptr);

struct ConsistencyMaps {
  Tensor e_p;  // photometric |I_l - warp(I_r, D)| per channel, [C,H,W]
  Tensor e_g;  // geometric |D_l - warp(D_r, D)|, [H,W]
  std::vector<std::uint8_t> valid;  // warp validity, [H,W]
};

// Warp driver: the destination-view disparity D_l by default; the source-view
// form (the paper text's variant) sits behind the flag.
ConsistencyMaps consistency_maps(const Tensor& img_left, const Tensor& img_right,
                                 const DisparityField& disp_left,
                                 const DisparityField& disp_right,
                                 bool warp_with_source_disparity = false);

// Pixel occluded iff the cross-warped disparity disagrees by more than tau
// pixels or the warp sample was invalid.
OcclusionMap occlusion_from_consistency(const DisparityField& disp_left,
                                        const DisparityField& disp_right,
                                        real tau = real(1));

struct DepthMap {
  int height = 0, width = 0;
  std::vector<real> depth;  // meters
  std::vector<std::uint8_t> valid;
};

DepthMap disparity_to_depth(const DisparityField& disp, const CameraRig& rig,
                            real min_disparity = real(1e-6));
DisparityField depth_to_disparity(const DepthMap& depth, const CameraRig& rig);

struct NormalMap {
  int height = 0, width = 0;
  std::vector<real> n;  // 3 per pixel, unit length where valid
  std::vector<std::uint8_t> valid;
};

// Normals from cross products of backprojected neighbor differences,
// oriented toward the camera (fronto-parallel plane -> (0,0,-1)).
NormalMap normals_from_depth(const DepthMap& depth, const CameraRig& rig);

// Mean per-pixel angle in degrees over pixels valid in both maps.
real normal_error_degrees(const NormalMap& pred, const NormalMap& gt);

}  // namespace stereo
