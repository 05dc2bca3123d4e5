#include "stereo/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace stereo {

TsdfVolume TsdfVolume::make(std::array<real, 3> origin, real voxel_size, int nx,
                            int ny, int nz, real truncation, real weight_cap) {
  TsdfVolume v;
  v.origin = origin;
  v.voxel_size = voxel_size;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.truncation = truncation > 0 ? truncation : 4 * voxel_size;
  v.weight_cap = weight_cap;
  v.validate();
  v.tsdf.assign(static_cast<size_t>(nx) * ny * nz, real(1));
  v.weight.assign(static_cast<size_t>(nx) * ny * nz, real(0));
  return v;
}

void TsdfVolume::validate() const {
  if (voxel_size <= 0) fail_config("voxel size must be positive");
  if (nx < 1 || ny < 1 || nz < 1) fail_config("grid extents must be >= 1");
  if (truncation <= 0) fail_config("truncation distance must be positive");
  if (weight_cap < 1) fail_config("weight cap must be >= 1");
}

void integrate(TsdfVolume& vol, const DepthMap& depth, const CameraRig& rig,
               const Pose& pose, const OcclusionMap* occlusion,
               real occlusion_threshold) {
  vol.validate();
  rig.validate();
  pose.validate();
  if (depth.height < 1 || depth.width < 1) fail_shape("depth map is empty");
  if (occlusion && (occlusion->prob.dim(0) != depth.height ||
                    occlusion->prob.dim(1) != depth.width))
    fail_shape("occlusion map extents differ from the depth map");
  const int H = depth.height, W = depth.width;
  const i64 n = static_cast<i64>(vol.nx) * vol.ny * vol.nz;
  parallel_for(n, [&](i64 b, i64 e) {
    for (i64 i = b; i < e; ++i) {
      const int x = static_cast<int>(i % vol.nx);
      const int y = static_cast<int>((i / vol.nx) % vol.ny);
      const int z = static_cast<int>(i / (static_cast<i64>(vol.nx) * vol.ny));
      const std::array<real, 3> q = pose.apply_inverse(vol.center(x, y, z));
      if (q[2] <= 0) continue;
      const int u = static_cast<int>(std::lround(rig.focal * q[0] / q[2] + rig.cx));
      const int v = static_cast<int>(std::lround(rig.focal * q[1] / q[2] + rig.cy));
      if (u < 0 || u >= W || v < 0 || v >= H) continue;
      const size_t pix = static_cast<size_t>(v) * W + u;
      if (!depth.valid[pix]) continue;
      if (occlusion && occlusion->prob.values()[pix] > occlusion_threshold) continue;
      const real sdf = depth.depth[pix] - q[2];
      if (sdf <= -vol.truncation) continue;  // hidden well behind the surface
      const real f = std::min(real(1), sdf / vol.truncation);
      const real w = vol.weight[static_cast<size_t>(i)];
      vol.tsdf[static_cast<size_t>(i)] =
          (vol.tsdf[static_cast<size_t>(i)] * w + f) / (w + 1);
      vol.weight[static_cast<size_t>(i)] = std::min(w + 1, vol.weight_cap);
    }
  });
}

namespace {

#include "mc_table.inc"

// cell corner offsets and the cut-edge endpoints matching kTriTable
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct V3 {
  real x = 0, y = 0, z = 0;
};
V3 operator-(const V3& a, const V3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
V3 cross(const V3& a, const V3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
real dot(const V3& a, const V3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
real norm(const V3& a) { return std::sqrt(dot(a, a)); }

// central-difference TSDF gradient, one-sided at borders
V3 gradient_at(const TsdfVolume& v, int x, int y, int z) {
  auto sample = [&](int a, int b, int c) {
    a = std::clamp(a, 0, v.nx - 1);
    b = std::clamp(b, 0, v.ny - 1);
    c = std::clamp(c, 0, v.nz - 1);
    return v.tsdf[v.index(a, b, c)];
  };
  return {(sample(x + 1, y, z) - sample(x - 1, y, z)) / 2,
          (sample(x, y + 1, z) - sample(x, y - 1, z)) / 2,
          (sample(x, y, z + 1) - sample(x, y, z - 1)) / 2};
}

}  // namespace

TriMesh extract_mesh(const TsdfVolume& vol) {
  vol.validate();
  TriMesh mesh;
  // shared vertex per cut grid edge: key = lower endpoint voxel id * 3 + axis
  std::unordered_map<i64, int> edge_vertex;
  std::vector<V3> vnormals;
  auto edge_key = [&](int x, int y, int z, int axis) {
    return (static_cast<i64>(vol.index(x, y, z))) * 3 + axis;
  };
  for (int z = 0; z + 1 < vol.nz; ++z)
    for (int y = 0; y + 1 < vol.ny; ++y)
      for (int x = 0; x + 1 < vol.nx; ++x) {
        real val[8];
        bool ok = true;
        for (int c = 0; c < 8 && ok; ++c) {
          const size_t idx =
              vol.index(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
          ok = vol.weight[idx] > 0;
          val[c] = vol.tsdf[idx];
        }
        if (!ok) continue;
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (val[c] < 0) config |= 1 << c;
        const signed char* tri = kTriTable[config];
        int vert_idx[12];
        for (int e = 0; e < 12 && tri[0] != -1; ++e) {
          bool used = false;
          for (int t = 0; tri[t] != -1; ++t) used |= tri[t] == e;
          if (!used) continue;
          const int* ca = kCorner[kEdge[e][0]];
          const int* cb = kCorner[kEdge[e][1]];
          const int ax0 = x + ca[0], ay0 = y + ca[1], az0 = z + ca[2];
          const int bx0 = x + cb[0], by0 = y + cb[1], bz0 = z + cb[2];
          const int axis = (ax0 != bx0) ? 0 : (ay0 != by0) ? 1 : 2;
          const bool a_low = ax0 + ay0 + az0 < bx0 + by0 + bz0;
          const i64 key = a_low ? edge_key(ax0, ay0, az0, axis)
                                : edge_key(bx0, by0, bz0, axis);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            vert_idx[e] = it->second;
            continue;
          }
          const real va = val[kEdge[e][0]], vb = val[kEdge[e][1]];
          const real t = (va == vb) ? real(0.5) : va / (va - vb);
          const std::array<real, 3> pa = vol.center(ax0, ay0, az0);
          const std::array<real, 3> pb = vol.center(bx0, by0, bz0);
          const V3 ga = gradient_at(vol, ax0, ay0, az0);
          const V3 gb = gradient_at(vol, bx0, by0, bz0);
          V3 g{ga.x + (gb.x - ga.x) * t, ga.y + (gb.y - ga.y) * t,
               ga.z + (gb.z - ga.z) * t};
          const real gl = norm(g);
          if (gl > 0) {
            g.x /= gl;
            g.y /= gl;
            g.z /= gl;
          } else {
            g = {0, 0, 1};
          }
          vert_idx[e] = static_cast<int>(mesh.vertices.size());
          edge_vertex.emplace(key, vert_idx[e]);
          mesh.vertices.push_back({pa[0] + (pb[0] - pa[0]) * t,
                                   pa[1] + (pb[1] - pa[1]) * t,
                                   pa[2] + (pb[2] - pa[2]) * t});
          vnormals.push_back(g);
        }
        for (int t = 0; tri[t] != -1; t += 3) {
          int a = vert_idx[tri[t]], b = vert_idx[tri[t + 1]], c = vert_idx[tri[t + 2]];
          if (a == b || b == c || a == c) continue;  // degenerate sliver
          // orient the winding to agree with the gradient normals
          const V3 pa{mesh.vertices[(size_t)a][0], mesh.vertices[(size_t)a][1],
                      mesh.vertices[(size_t)a][2]};
          const V3 pb{mesh.vertices[(size_t)b][0], mesh.vertices[(size_t)b][1],
                      mesh.vertices[(size_t)b][2]};
          const V3 pc{mesh.vertices[(size_t)c][0], mesh.vertices[(size_t)c][1],
                      mesh.vertices[(size_t)c][2]};
          const V3 fn = cross(pb - pa, pc - pa);
          const V3 na = vnormals[(size_t)a];
          const real agree = dot(fn, {na.x + vnormals[(size_t)b].x + vnormals[(size_t)c].x,
                                      na.y + vnormals[(size_t)b].y + vnormals[(size_t)c].y,
                                      na.z + vnormals[(size_t)b].z + vnormals[(size_t)c].z});
          if (agree < 0) std::swap(b, c);
          mesh.triangles.push_back({a, b, c});
        }
      }
  mesh.normals.reserve(vnormals.size());
  for (const V3& n : vnormals) mesh.normals.push_back({n.x, n.y, n.z});
  return mesh;
}

namespace {

// closest point on a triangle (Ericson, Real-Time Collision Detection)
V3 closest_on_triangle(const V3& p, const V3& a, const V3& b, const V3& c) {
  const V3 ab = b - a, ac = c - a, ap = p - a;
  const real d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const V3 bp = p - b;
  const real d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const real vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const real t = d1 / (d1 - d3);
    return {a.x + ab.x * t, a.y + ab.y * t, a.z + ab.z * t};
  }
  const V3 cp = p - c;
  const real d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const real vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const real t = d2 / (d2 - d6);
    return {a.x + ac.x * t, a.y + ac.y * t, a.z + ac.z * t};
  }
  const real va = d3 * d6 - d5 * d4;
  if (va <= 0 && d4 - d3 >= 0 && d5 - d6 >= 0) {
    const real t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b.x + (c.x - b.x) * t, b.y + (c.y - b.y) * t, b.z + (c.z - b.z) * t};
  }
  const real denom = real(1) / (va + vb + vc);
  const real v = vb * denom, w = vc * denom;
  return {a.x + ab.x * v + ac.x * w, a.y + ab.y * v + ac.y * w,
          a.z + ab.z * v + ac.z * w};
}

struct TriRef {
  V3 a, b, c, n;  // n = unit plane normal (or zero for slivers)
};

}  // namespace

real point_to_plane_rmse(const TriMesh& eval, const TriMesh& reference,
                         std::vector<real>* per_vertex) {
  if (eval.vertices.empty() || eval.triangles.empty())
    fail_config("evaluated mesh is empty");
  if (reference.vertices.empty() || reference.triangles.empty())
    fail_config("reference mesh is empty");

  std::vector<TriRef> tris;
  tris.reserve(reference.triangles.size());
  V3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (const auto& t : reference.triangles) {
    TriRef r;
    const auto& va = reference.vertices[(size_t)t[0]];
    const auto& vb = reference.vertices[(size_t)t[1]];
    const auto& vc = reference.vertices[(size_t)t[2]];
    r.a = {va[0], va[1], va[2]};
    r.b = {vb[0], vb[1], vb[2]};
    r.c = {vc[0], vc[1], vc[2]};
    V3 n = cross(r.b - r.a, r.c - r.a);
    const real l = norm(n);
    r.n = l > 0 ? V3{n.x / l, n.y / l, n.z / l} : V3{0, 0, 0};
    tris.push_back(r);
    for (const V3* p : {&r.a, &r.b, &r.c}) {
      lo = {std::min(lo.x, p->x), std::min(lo.y, p->y), std::min(lo.z, p->z)};
      hi = {std::max(hi.x, p->x), std::max(hi.y, p->y), std::max(hi.z, p->z)};
    }
  }

  // uniform grid of triangle indices by bounding box
  const real ext = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, real(1e-9)});
  const int G = std::max(1, std::min(48, static_cast<int>(std::cbrt(
                                             static_cast<double>(tris.size()))) * 2));
  const real cell = ext / G;
  auto cell_of = [&](real v, real o) {
    return std::clamp(static_cast<int>((v - o) / cell), 0, G - 1);
  };
  std::vector<std::vector<int>> grid(static_cast<size_t>(G) * G * G);
  for (size_t t = 0; t < tris.size(); ++t) {
    const TriRef& r = tris[t];
    const int x0 = cell_of(std::min({r.a.x, r.b.x, r.c.x}), lo.x);
    const int x1 = cell_of(std::max({r.a.x, r.b.x, r.c.x}), lo.x);
    const int y0 = cell_of(std::min({r.a.y, r.b.y, r.c.y}), lo.y);
    const int y1 = cell_of(std::max({r.a.y, r.b.y, r.c.y}), lo.y);
    const int z0 = cell_of(std::min({r.a.z, r.b.z, r.c.z}), lo.z);
    const int z1 = cell_of(std::max({r.a.z, r.b.z, r.c.z}), lo.z);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          grid[(static_cast<size_t>(z) * G + y) * G + x].push_back(static_cast<int>(t));
  }

  std::vector<real> sq(eval.vertices.size());
  std::vector<real> errs(eval.vertices.size());
  parallel_for(static_cast<i64>(eval.vertices.size()), [&](i64 bgn, i64 end) {
    std::vector<int> cand;
    for (i64 vi = bgn; vi < end; ++vi) {
      const V3 p{eval.vertices[(size_t)vi][0], eval.vertices[(size_t)vi][1],
                 eval.vertices[(size_t)vi][2]};
      const int cx = cell_of(p.x, lo.x), cy = cell_of(p.y, lo.y), cz = cell_of(p.z, lo.z);
      real best_d2 = real(1e30);
      int best_t = -1;
      V3 best_cp{};
      // expanding Chebyshev rings; a ring at distance k is at least
      // (k-1)*cell away from any point inside the query's cell
      for (int k = 0; k < 2 * G; ++k) {
        if (best_t >= 0 && real(k - 1) * cell > std::sqrt(best_d2)) break;
        cand.clear();
        const int zlo = std::max(0, cz - k), zhi = std::min(G - 1, cz + k);
        const int ylo = std::max(0, cy - k), yhi = std::min(G - 1, cy + k);
        const int xlo = std::max(0, cx - k), xhi = std::min(G - 1, cx + k);
        if (cz - k < 0 && cz + k > G - 1 && cy - k < 0 && cy + k > G - 1 &&
            cx - k < 0 && cx + k > G - 1 && best_t >= 0)
          break;  // whole grid already visited
        for (int z = zlo; z <= zhi; ++z)
          for (int y = ylo; y <= yhi; ++y)
            for (int x = xlo; x <= xhi; ++x) {
              if (std::max({std::abs(z - cz), std::abs(y - cy), std::abs(x - cx)}) != k)
                continue;  // only the new shell
              for (int t : grid[(static_cast<size_t>(z) * G + y) * G + x])
                cand.push_back(t);
            }
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        for (int t : cand) {
          const TriRef& r = tris[(size_t)t];
          const V3 cp = closest_on_triangle(p, r.a, r.b, r.c);
          const V3 d = p - cp;
          const real d2 = dot(d, d);
          // ties go to the lowest triangle index, matching a linear scan
          if (d2 < best_d2 || (d2 == best_d2 && t < best_t)) {
            best_d2 = d2;
            best_t = t;
            best_cp = cp;
          }
        }
      }
      const TriRef& r = tris[(size_t)best_t];
      const V3 off = p - best_cp;
      // plane-projected error; slivers fall back to the point distance
      const real e = norm(r.n) > 0 ? dot(off, r.n) : norm(off);
      errs[(size_t)vi] = std::abs(e);
      sq[(size_t)vi] = e * e;
    }
  });
  if (per_vertex) *per_vertex = errs;
  return std::sqrt(pairwise_sum(sq) / real(sq.size()));
}

}  // namespace stereo
