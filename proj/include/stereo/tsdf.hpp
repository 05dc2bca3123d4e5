#pragma once

#include "stereo/geometry.hpp"
#include "stereo/imageio.hpp"

namespace stereo {

// Dense voxel grid of truncated signed distances in units of the truncation
// distance (so values live in [-1,1]) plus per-voxel fusion weights.
struct TsdfVolume {
  std::array<real, 3> origin{0, 0, 0};  // world position of voxel (0,0,0) center
  real voxel_size = real(0.01);
  int nx = 0, ny = 0, nz = 0;
  real truncation = 0;   // meters; make() defaults it to 4 * voxel_size
  real weight_cap = 100;
  std::vector<real> tsdf;    // initialized to 1 (free space), weight 0
  std::vector<real> weight;

  static TsdfVolume make(std::array<real, 3> origin, real voxel_size, int nx, int ny,
                         int nz, real truncation = 0, real weight_cap = 100);
  void validate() const;
  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * ny + y) * nx + x;
  }
  std::array<real, 3> center(int x, int y, int z) const {
    return {origin[0] + voxel_size * x, origin[1] + voxel_size * y,
            origin[2] + voxel_size * z};
  }
};

// Projective update: every voxel in the frustum projects to its nearest pixel;
// signed distance = pixel depth - voxel camera z, clamped to the truncation
// band, fused by a weight-1 running average with capped weight. Voxels more
// than one truncation behind the surface are untouched. When an occlusion map
// is given, pixels with probability above the threshold are skipped.
void integrate(TsdfVolume& vol, const DepthMap& depth, const CameraRig& rig,
               const Pose& pose, const OcclusionMap* occlusion = nullptr,
               real occlusion_threshold = real(0.5));

// Marching cubes over cells whose eight corners all carry weight; vertices on
// zero crossings by linear interpolation, shared across cells; normals from
// the interpolated TSDF gradient (pointing into free space); winding oriented
// to agree with the normals. No crossing -> empty mesh.
TriMesh extract_mesh(const TsdfVolume& vol);

// For each eval vertex: nearest point on the reference surface (grid
// accelerated, equivalent to scanning every triangle), offset projected on
// that triangle's plane normal, RMS over vertices. Optionally reports the
// absolute per-vertex errors for visualization.
real point_to_plane_rmse(const TriMesh& eval, const TriMesh& reference,
                         std::vector<real>* per_vertex = nullptr);

}  // namespace stereo
