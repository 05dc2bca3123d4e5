#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "stereo/synth.hpp"

using namespace stereo;

namespace {
CameraRig test_rig(int H, int W) {
  return CameraRig{real(60), real(0.1), real(W - 1) / 2, real(H - 1) / 2};
}
}  // namespace

TEST_CASE("single fronto-parallel plane: constant disparity, zero occlusion") {
  const int H = 16, W = 24;
  CameraRig rig = test_rig(H, W);
  const real d0 = 4;
  SceneSpec spec;
  spec.max_disparity = 16;
  Primitive bg;
  bg.z0 = rig.focal * rig.baseline / d0;
  spec.primitives.push_back(bg);
  StereoSample s = generate_scene(spec, rig, H, W);
  for (size_t i = 0; i < (size_t)(H * W); ++i) {
    CHECK(s.disp_left.disp.values()[i] == doctest::Approx(d0).epsilon(1e-12));
    CHECK(s.disp_right.disp.values()[i] == doctest::Approx(d0).epsilon(1e-12));
    // the only occlusions are projections falling off the other frame
    const int x = (int)i % W;
    CHECK(s.occ_left.prob.values()[i] == (real(x) - d0 < 0 ? real(1) : real(0)));
    CHECK(s.occ_right.prob.values()[i] == (real(x) + d0 > real(W - 1) ? real(1) : real(0)));
  }
}

TEST_CASE("two overlapping planes produce an occlusion band of analytic width") {
  const int H = 20, W = 40;
  CameraRig rig = test_rig(H, W);
  const real fb = rig.focal * rig.baseline;
  const int db = 3, dn = 9;  // background and near-plane disparities
  const int px0 = 18, px1 = 34;  // near plane's left-image pixel span
  SceneSpec spec;
  spec.max_disparity = 16;
  Primitive bg;
  bg.z0 = fb / real(db);
  spec.primitives.push_back(bg);
  Primitive near;
  near.z0 = fb / real(dn);
  // footprint edges midway between pixel samples so spans are unambiguous
  near.x0 = (real(px0) - real(0.5) - rig.cx) * near.z0 / rig.focal;
  near.x1 = (real(px1) + real(0.5) - rig.cx) * near.z0 / rig.focal;
  spec.primitives.push_back(near);
  StereoSample s = generate_scene(spec, rig, H, W);

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const size_t i = (size_t)(y * W + x);
      const bool on_near = x >= px0 && x <= px1;
      CHECK(s.disp_left.disp.values()[i] == doctest::Approx(on_near ? dn : db).epsilon(1e-12));
      bool occ;
      if (on_near)
        occ = x - dn < 0;  // near plane is co-visible unless off-frame
      else if (x < px0)
        occ = x >= px0 - (dn - db) || x - db < 0;  // the band, width dn - db
      else
        occ = false;  // background right of the plane: projection clears it
      CHECK(s.occ_left.prob.values()[i] == (occ ? real(1) : real(0)));
    }
}

TEST_CASE("same seed renders bit-identical samples") {
  const int H = 24, W = 32;
  CameraRig rig = test_rig(H, W);
  SceneSpec spec = random_scene_spec(987, rig, H, W, 16);
  StereoSample a = generate_scene(spec, rig, H, W);
  StereoSample b = generate_scene(spec, rig, H, W);
  for (size_t i = 0; i < a.image_left.values().size(); ++i) {
    CHECK(a.image_left.values()[i] == b.image_left.values()[i]);
    CHECK(a.image_right.values()[i] == b.image_right.values()[i]);
  }
  for (size_t i = 0; i < (size_t)(H * W); ++i) {
    CHECK(a.disp_left.disp.values()[i] == b.disp_left.disp.values()[i]);
    CHECK(a.occ_left.prob.values()[i] == b.occ_left.prob.values()[i]);
    CHECK(a.exclusion[i] == b.exclusion[i]);
  }
}

TEST_CASE("primitive outside the disparity budget is rejected") {
  const int H = 8, W = 8;
  CameraRig rig = test_rig(H, W);
  SceneSpec spec;
  spec.max_disparity = 8;
  Primitive bg;
  bg.z0 = rig.focal * rig.baseline / real(7);  // budget is [1, 6]
  spec.primitives.push_back(bg);
  CHECK_THROWS_AS(generate_scene(spec, rig, H, W), std::invalid_argument);
  spec.primitives[0].z0 = rig.focal * rig.baseline / real(0.5);
  CHECK_THROWS_AS(generate_scene(spec, rig, H, W), std::invalid_argument);
}

TEST_CASE("scene without full coverage is rejected") {
  const int H = 8, W = 8;
  CameraRig rig = test_rig(H, W);
  SceneSpec spec;
  spec.max_disparity = 16;
  Primitive small;
  small.z0 = rig.focal * rig.baseline / real(4);
  small.x0 = 0;
  small.x1 = real(0.01);
  spec.primitives.push_back(small);
  CHECK_THROWS_AS(generate_scene(spec, rig, H, W), std::invalid_argument);
}

TEST_CASE("consistency-based occlusion equals the z-test on integer-disparity scenes") {
  const int H = 32, W = 48;
  CameraRig rig = test_rig(H, W);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    SceneSpec spec = random_scene_spec(seed, rig, H, W, 24, /*integer=*/true);
    StereoSample s = generate_scene(spec, rig, H, W);
    OcclusionMap derived = occlusion_from_consistency(s.disp_left, s.disp_right, real(1));
    for (size_t i = 0; i < (size_t)(H * W); ++i)
      CHECK(derived.prob.values()[i] == s.occ_left.prob.values()[i]);
    // and the ground-truth disparities cross-check exactly where co-visible
    ConsistencyMaps m = consistency_maps(s.image_left, s.image_right, s.disp_left,
                                         s.disp_right);
    for (size_t i = 0; i < (size_t)(H * W); ++i)
      if (m.valid[i] && s.occ_left.prob.values()[i] == real(0))
        CHECK(m.e_g.values()[i] <= real(1e-9));
  }
}

TEST_CASE("warped right image photometrically matches the left on co-visible pixels") {
  const int H = 32, W = 48;
  CameraRig rig = test_rig(H, W);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SceneSpec spec = random_scene_spec(seed, rig, H, W, 24);
    StereoSample s = generate_scene(spec, rig, H, W);
    std::vector<std::uint8_t> valid;
    Tensor warped = warp_horizontal(s.image_right, s.disp_left.disp, &valid);
    real acc = 0;
    int n = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const size_t i = (size_t)(y * W + x);
        if (!valid[i] || s.occ_left.prob.values()[i] != real(0) || s.exclusion[i]) continue;
        for (int c = 0; c < 3; ++c)
          acc += std::abs(warped.values()[(size_t)(c * H * W) + i] -
                          s.image_left.values()[(size_t)(c * H * W) + i]);
        n += 3;
      }
    REQUIRE(n > 0);
    CHECK(acc / n < real(0.02));
  }
}

TEST_CASE("exclusion mask thresholds and matches the painted patch") {
  const int H = 32, W = 48;
  CameraRig rig = test_rig(H, W);
  // find a seed whose scene has a painted patch
  bool found = false;
  for (std::uint64_t seed = 50; seed < 90 && !found; ++seed) {
    SceneSpec spec = random_scene_spec(seed, rig, H, W, 24, false, real(0.9));
    StereoSample s = generate_scene(spec, rig, H, W);
    size_t painted = 0;
    for (auto v : s.exclusion) painted += v;
    if (painted == 0) continue;
    found = true;
    auto mask = exclusion_mask(s.image_left, s.clean_left, real(0.1));
    for (size_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == s.exclusion[i]);
    // identical reference -> empty mask
    auto empty = exclusion_mask(s.image_left, s.image_left, real(0.1));
    for (auto v : empty) CHECK(v == 0);
    // t = 0 -> every non-identical pixel excluded
    auto all = exclusion_mask(s.image_left, s.clean_left, real(0));
    for (size_t i = 0; i < all.size(); ++i) {
      real peak = 0;
      for (int c = 0; c < 3; ++c)
        peak = std::max(peak, std::abs(s.image_left.values()[(size_t)(c * H * W) + i] -
                                       s.clean_left.values()[(size_t)(c * H * W) + i]));
      CHECK(all[i] == (peak > 0 ? 1 : 0));
    }
  }
  CHECK(found);
}

TEST_CASE("image normalization anchors and inverse") {
  Tensor img = Tensor::from({1, 1, 3}, {real(0.5), real(1), real(0)});
  Tensor n = normalize_image(img);
  CHECK(n.values()[0] == real(0));
  CHECK(n.values()[1] == real(1));
  CHECK(n.values()[2] == real(-1));
  Tensor back = denormalize_image(n);
  for (int i = 0; i < 3; ++i)
    CHECK(back.values()[(size_t)i] == doctest::Approx(img.values()[(size_t)i]).epsilon(1e-12));
}

TEST_CASE("50 random scenes cover at least 80% of the disparity range") {
  const int H = 32, W = 48, D = 24;
  CameraRig rig = test_rig(H, W);
  std::set<int> bins;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneSpec spec = random_scene_spec(seed, rig, H, W, D);
    StereoSample s = generate_scene(spec, rig, H, W);
    for (real d : s.disp_left.disp.values()) {
      const int b = (int)std::floor(d);
      if (b >= 1 && b <= D - 2) bins.insert(b);
    }
  }
  CHECK((int)bins.size() >= (int)std::ceil(0.8 * (D - 2)));
}
