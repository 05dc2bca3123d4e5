#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stereo/tsdf.hpp"

using namespace stereo;

#include "scene_helpers.hpp"

using namespace scenehelp;

TEST_CASE("single plane frame puts the zero crossing at the plane depth") {
  const int H = 32, W = 32;
  const CameraRig rig{real(32), real(0.1), real(W - 1) / 2, real(H - 1) / 2};
  const real zp = real(0.5);
  DepthMap d;
  d.height = H;
  d.width = W;
  d.depth.assign((size_t)H * W, zp);
  d.valid.assign((size_t)H * W, 1);
  const real voxel = real(0.02);
  TsdfVolume vol = TsdfVolume::make({real(-0.1), real(-0.1), real(0.3)}, voxel, 11, 11, 21);
  integrate(vol, d, rig, Pose{});
  // walk the central voxel column: find the sign change and interpolate
  bool found = false;
  for (int z = 0; z + 1 < vol.nz; ++z) {
    const real a = vol.tsdf[vol.index(5, 5, z)];
    const real b = vol.tsdf[vol.index(5, 5, z + 1)];
    if (vol.weight[vol.index(5, 5, z)] == 0 || vol.weight[vol.index(5, 5, z + 1)] == 0)
      continue;
    if (a > 0 && b <= 0) {
      const real zc = vol.center(5, 5, z)[2] + voxel * a / (a - b);
      CHECK(std::abs(zc - zp) < voxel / 2);
      found = true;
    }
  }
  CHECK(found);
  // tsdf in range everywhere
  for (real v : vol.tsdf) CHECK((v >= real(-1) && v <= real(1)));
}

TEST_CASE("re-integrating the identical frame is idempotent on tsdf values") {
  const int H = 16, W = 16;
  const CameraRig rig{real(16), real(0.1), real(7.5), real(7.5)};
  DepthMap d;
  d.height = H;
  d.width = W;
  d.depth.assign((size_t)H * W, real(0.4));
  d.valid.assign((size_t)H * W, 1);
  TsdfVolume vol = TsdfVolume::make({real(-0.1), real(-0.1), real(0.25)}, real(0.02),
                                    11, 11, 16);
  integrate(vol, d, rig, Pose{});
  const std::vector<real> once = vol.tsdf;
  integrate(vol, d, rig, Pose{});
  CHECK(vol.tsdf == once);
}

TEST_CASE("all-invalid frame is a no-op and occluded pixels are skipped") {
  const int H = 16, W = 16;
  const CameraRig rig{real(16), real(0.1), real(7.5), real(7.5)};
  DepthMap d;
  d.height = H;
  d.width = W;
  d.depth.assign((size_t)H * W, real(0.4));
  d.valid.assign((size_t)H * W, 0);
  TsdfVolume vol = TsdfVolume::make({real(-0.1), real(-0.1), real(0.25)}, real(0.02),
                                    11, 11, 16);
  integrate(vol, d, rig, Pose{});
  for (real w : vol.weight) CHECK(w == real(0));

  std::fill(d.valid.begin(), d.valid.end(), 1);
  std::vector<real> occ((size_t)H * W, real(1));  // everything flagged occluded
  OcclusionMap om{Tensor::from({H, W}, std::move(occ))};
  integrate(vol, d, rig, Pose{}, &om);
  for (real w : vol.weight) CHECK(w == real(0));
  integrate(vol, d, rig, Pose{}, &om, /*threshold=*/real(1.5));
  real total = 0;
  for (real w : vol.weight) total += w;
  CHECK(total > 0);  // threshold above the probabilities admits the pixels again
}

TEST_CASE("fuzzed integration keeps tsdf and weights in range") {
  const int H = 12, W = 12;
  const CameraRig rig{real(12), real(0.1), real(5.5), real(5.5)};
  TsdfVolume vol =
      TsdfVolume::make({real(-0.15), real(-0.15), real(0.1)}, real(0.03), 11, 11, 21,
                       /*truncation=*/0, /*cap=*/5);
  Rng rng(12);
  for (int f = 0; f < 40; ++f) {
    DepthMap d;
    d.height = H;
    d.width = W;
    d.depth.resize((size_t)H * W);
    d.valid.resize((size_t)H * W);
    for (size_t i = 0; i < d.depth.size(); ++i) {
      d.depth[i] = rng.uniform(real(0.05), real(0.8));
      d.valid[i] = rng.uniform(0, 1) < real(0.8);
    }
    integrate(vol, d, rig, Pose{});
  }
  for (real v : vol.tsdf) CHECK((v >= real(-1) && v <= real(1)));
  for (real w : vol.weight) CHECK((w >= real(0) && w <= real(5)));
}

TEST_CASE("integration order barely changes the fused volume") {
  const int H = 16, W = 16;
  const CameraRig rig{real(16), real(0.1), real(7.5), real(7.5)};
  std::vector<DepthMap> frames;
  Rng rng(5);
  for (int f = 0; f < 6; ++f) {
    DepthMap d;
    d.height = H;
    d.width = W;
    d.depth.resize((size_t)H * W);
    d.valid.assign((size_t)H * W, 1);
    for (auto& v : d.depth) v = rng.uniform(real(0.3), real(0.5));
    frames.push_back(std::move(d));
  }
  auto fuse = [&](const std::vector<int>& order) {
    TsdfVolume vol = TsdfVolume::make({real(-0.1), real(-0.1), real(0.25)}, real(0.02),
                                      11, 11, 16);
    for (int i : order) integrate(vol, frames[(size_t)i], rig, Pose{});
    return vol.tsdf;
  };
  const auto a = fuse({0, 1, 2, 3, 4, 5});
  const auto b = fuse({5, 3, 1, 0, 4, 2});
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}

TEST_CASE("marching cubes on an analytic sphere SDF") {
  const std::array<real, 3> c{0, 0, 0};
  const real r = real(0.3), voxel = real(0.025);
  TsdfVolume vol = analytic_sphere_volume(c, r, voxel, 33);
  TriMesh m = extract_mesh(vol);
  REQUIRE(!m.vertices.empty());
  REQUIRE(!m.triangles.empty());
  REQUIRE(m.normals.size() == m.vertices.size());
  real sq = 0;
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    const auto& v = m.vertices[i];
    const real rad = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    sq += (rad - r) * (rad - r);
    const auto& n = m.normals[i];
    const real nl = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    CHECK(nl == doctest::Approx(1.0).epsilon(1e-6));
    // outward radial orientation
    CHECK((n[0] * v[0] + n[1] * v[1] + n[2] * v[2]) / rad > real(0.9));
  }
  CHECK(std::sqrt(sq / real(m.vertices.size())) < voxel / 4);
  for (const auto& t : m.triangles) {
    CHECK(t[0] < (int)m.vertices.size());
    CHECK(t[1] < (int)m.vertices.size());
    CHECK(t[2] < (int)m.vertices.size());
  }
}

TEST_CASE("all-positive volume yields an empty mesh; sign flip flips normals") {
  TsdfVolume vol = TsdfVolume::make({0, 0, 0}, real(0.1), 8, 8, 8);
  std::fill(vol.weight.begin(), vol.weight.end(), real(1));
  CHECK(extract_mesh(vol).vertices.empty());

  TsdfVolume sph = analytic_sphere_volume({0, 0, 0}, real(0.3), real(0.05), 17);
  TriMesh a = extract_mesh(sph);
  for (auto& v : sph.tsdf) v = -v;
  TriMesh b = extract_mesh(sph);
  REQUIRE(a.vertices.size() == b.vertices.size());
  for (size_t i = 0; i < a.vertices.size(); ++i) {
    CHECK(a.vertices[i] == b.vertices[i]);
    for (int k = 0; k < 3; ++k)
      CHECK(a.normals[i][(size_t)k] == doctest::Approx(-b.normals[i][(size_t)k])
                                           .epsilon(1e-12));
  }
}

TEST_CASE("point-to-plane RMSE anchors and brute-force equivalence") {
  // quad made of two triangles in the z=0 plane
  TriMesh plane;
  plane.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  plane.triangles = {{0, 1, 2}, {0, 2, 3}};
  CHECK(point_to_plane_rmse(plane, plane) == real(0));

  const real delta = real(0.07);
  TriMesh shifted = plane;
  for (auto& v : shifted.vertices) v[2] += delta;
  std::vector<real> pv;
  CHECK(point_to_plane_rmse(shifted, plane, &pv) == doctest::Approx(delta).epsilon(1e-12));
  for (real e : pv) CHECK(e == doctest::Approx(delta).epsilon(1e-12));

  // accelerated path vs linear scan on an irregular pair of meshes
  TriMesh ref = sphere_mesh({0, 0, 0}, real(0.3), 16, 8);     // 256 triangles
  TriMesh ev = sphere_mesh({real(0.02), 0, 0}, real(0.33), 11, 6);
  std::vector<real> fast_pv, brute_pv;
  const real fast = point_to_plane_rmse(ev, ref, &fast_pv);
  const real brute = brute_rmse(ev, ref, &brute_pv);
  CHECK(fast == doctest::Approx(brute).epsilon(1e-12));
  REQUIRE(fast_pv.size() == brute_pv.size());
  for (size_t i = 0; i < fast_pv.size(); ++i)
    CHECK(fast_pv[i] == doctest::Approx(brute_pv[i]).epsilon(1e-12));

  CHECK_THROWS_AS(point_to_plane_rmse(TriMesh{}, plane), std::invalid_argument);
  CHECK_THROWS_AS(point_to_plane_rmse(plane, TriMesh{}), std::invalid_argument);
}

TEST_CASE("fusing orbiting depth renders of a sphere reconstructs it") {
  const std::array<real, 3> c{0, 0, real(0)};
  const real r = real(0.3), voxel = real(0.02);
  const int H = 64, W = 64;
  const CameraRig rig{real(64), real(0.1), real(W - 1) / 2, real(H - 1) / 2};
  TsdfVolume vol = TsdfVolume::make({c[0] - voxel * 22, c[1] - voxel * 22,
                                     c[2] - voxel * 22},
                                    voxel, 45, 45, 45);
  const int N = 12;
  for (int k = 0; k < N; ++k) {
    const Pose pose = orbit_pose(c, real(1.5), 2 * real(M_PI) * k / N);
    DepthMap d = render_sphere_depth(rig, pose, c, r, H, W);
    integrate(vol, d, rig, pose);
  }
  TriMesh fused = extract_mesh(vol);
  REQUIRE(fused.triangles.size() > 100);
  TriMesh ref = sphere_mesh(c, r, 64, 32);
  const real rmse = point_to_plane_rmse(fused, ref);
  CHECK(rmse < voxel / 2);
}
