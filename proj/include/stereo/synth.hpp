#pragma once

#include <cstdint>

#include "stereo/geometry.hpp"

namespace stereo {

enum class PrimitiveKind { kPlane, kSlantedPlane, kSphere, kBox };
enum class TextureKind { kChecker, kNoise, kFlat };

// One ray-castable surface. Planes are z = z0 (+ ax*X + ay*Y when slanted)
// over a world-space footprint; spheres and boxes are the usual solids.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kPlane;
  real z0 = 0, ax = 0, ay = 0;
  real x0 = -1e9, x1 = 1e9, y0 = -1e9, y1 = 1e9;  // plane footprint
  std::array<real, 3> center{0, 0, 0};
  real radius = 0;
  std::array<real, 3> bmin{0, 0, 0}, bmax{0, 0, 0};

  TextureKind texture = TextureKind::kChecker;
  real tex_scale = real(0.1);
  std::array<real, 3> color_a{real(0.9), real(0.9), real(0.9)};
  std::array<real, 3> color_b{real(0.1), real(0.1), real(0.1)};
  std::uint64_t tex_seed = 0;

  // A world-space rect painted a different flat color in each view; it breaks
  // photometric consistency the way glass and mirrors do on a real rig.
  bool reflective = false;
  real rx0 = 0, rx1 = 0, ry0 = 0, ry1 = 0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int max_disparity = 32;  // the network's D; primitives must fit [1, D-2]
  std::vector<Primitive> primitives;
  std::array<real, 3> light{real(0.3), real(-0.5), real(-0.8)};
  void validate(const CameraRig& rig) const;
};

struct StereoSample {
  Tensor image_left, image_right;  // [3,H,W] in [0,1]
  Tensor clean_left;  // left view without the view-dependent paint
  DisparityField disp_left, disp_right;
  OcclusionMap occ_left, occ_right;  // exact cross-view z-test, occluded = 1
  std::vector<std::uint8_t> exclusion;  // left view, 1 = photometrically unreliable
  CameraRig rig;
  Pose pose;
};

// Ray-casts both views of a shared scene. Disparity is analytic from hit
// depth; occlusion comes from re-tracing toward the other camera. Every pixel
// must hit something (put a background plane in the spec). Deterministic per
// spec for a fixed thread count.
StereoSample generate_scene(const SceneSpec& spec, const CameraRig& rig, int H, int W);

// Pixel excluded iff max-channel |image - reference| > threshold.
std::vector<std::uint8_t> exclusion_mask(const Tensor& image, const Tensor& reference,
                                         real threshold);

// (x - 0.5) / 0.5 per channel, and its inverse.
Tensor normalize_image(const Tensor& image);
Tensor denormalize_image(const Tensor& image);

// Random scene within the disparity budget. `integer_disparity` restricts the
// scene to fronto-parallel planes on integer disparities separated by >= 2 px,
// which makes consistency-based occlusion coincide with the geometric z-test.
SceneSpec random_scene_spec(std::uint64_t seed, const CameraRig& rig, int H, int W,
                            int max_disparity, bool integer_disparity = false,
                            real reflective_fraction = real(0.15));

// The same scene expressed in the frame of a camera translated to `position`
// (identity rotation), plus the pose mapping that camera's coordinates back
// to the original frame. Keeping the translation small keeps the translated
// scene inside the disparity budget.
std::pair<SceneSpec, Pose> translate_scene(const SceneSpec& spec,
                                           const std::array<real, 3>& position);

// Fixed three-surface room (back wall, right wall sloping toward the camera,
// floor doing the same) that covers every pixel and sits in the nearer half
// of the disparity budget, with margin for small camera moves. Optionally
// reports the world-space box enclosing the visible surfaces, for sizing a
// fusion grid.
SceneSpec room_scene(const CameraRig& rig, int H, int W, int max_disparity,
                     std::array<real, 3>* bounds_min = nullptr,
                     std::array<real, 3>* bounds_max = nullptr);

}  // namespace stereo
