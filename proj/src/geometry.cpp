#include "stereo/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace stereo {

std::array<real, 3> Pose::apply(const std::array<real, 3>& p) const {
  std::array<real, 3> q;
  for (int i = 0; i < 3; ++i)
    q[i] = rot[i * 3 + 0] * p[0] + rot[i * 3 + 1] * p[1] + rot[i * 3 + 2] * p[2] + t[i];
  return q;
}

std::array<real, 3> Pose::apply_inverse(const std::array<real, 3>& p) const {
  std::array<real, 3> d = {p[0] - t[0], p[1] - t[1], p[2] - t[2]};
  std::array<real, 3> q;
  for (int i = 0; i < 3; ++i)  // R^T d
    q[i] = rot[0 * 3 + i] * d[0] + rot[1 * 3 + i] * d[1] + rot[2 * 3 + i] * d[2];
  return q;
}

void Pose::validate() const {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      real dot = 0;
      for (int k = 0; k < 3; ++k) dot += rot[i * 3 + k] * rot[j * 3 + k];
      real want = (i == j) ? real(1) : real(0);
      if (std::abs(dot - want) > real(1e-9))
        fail_config("pose rotation is not orthonormal");
    }
}

void CameraRig::validate() const {
  if (!(focal > 0) || !(baseline > 0))
    fail_config("camera rig needs positive focal length and baseline");
}

DisparityField DisparityField::dense(Tensor disp, View view) {
  if (disp.ndim() != 2) fail_shape("disparity field expects a [H,W] tensor");
  DisparityField f;
  f.disp = std::move(disp);
  f.valid.assign(static_cast<size_t>(f.disp.numel()), 1);
  f.view = view;
  return f;
}

real CostVolume::at(int shift, int y, int x, int c) const {
  const int ch = vol.dim(1), lv = vol.dim(2), h = vol.dim(3), w = vol.dim(4);
  if (shift < 0 || shift >= lv || y < 0 || y >= h || x < 0 || x >= w || c < 0 || c >= ch)
    fail_shape("cost volume index out of range");
  return vol.values()[static_cast<size_t>(((c * lv + shift) * h + y) * w + x)];
}

std::pair<CostVolume, CostVolume> build_cost_volume(const Tensor& feat_left,
                                                    const Tensor& feat_right,
                                                    int max_disparity) {
  if (feat_left.ndim() != 4 || feat_left.dim(0) != 1)
    fail_shape("cost volume expects [1,C,H,W] features");
  if (!same_shape(feat_left, feat_right))
    fail_shape("cost volume features must match: " + shape_str(feat_left.shape()) +
               " vs " + shape_str(feat_right.shape()));
  if (max_disparity <= 0 || max_disparity % 4 != 0)
    fail_config("max disparity must be a positive multiple of 4");
  const int C = feat_left.dim(1), H = feat_left.dim(2), W = feat_left.dim(3);
  const int L = max_disparity / 4;  // features live at quarter resolution
  if (L > W) fail_config("disparity range exceeds feature width");

  auto one_view = [&](const Tensor& dst, const Tensor& src, int dir) {
    // value at (c,s,y,x) = dst(c,y,x) - src(c,y,x + dir*s), zero when shifted off-image
    std::vector<real> out(static_cast<size_t>(C) * L * H * W, real(0));
    std::vector<std::uint8_t> in_range(static_cast<size_t>(L) * H * W, 0);
    const auto& dv = dst.values();
    const auto& sv = src.values();
    parallel_for(static_cast<i64>(L) * H, [&](i64 b, i64 e) {
      for (i64 sy = b; sy < e; ++sy) {
        const int s = static_cast<int>(sy / H), y = static_cast<int>(sy % H);
        for (int x = 0; x < W; ++x) {
          const int xs = x + dir * s;
          if (xs < 0 || xs >= W) continue;
          in_range[static_cast<size_t>((s * H + y) * W + x)] = 1;
          for (int c = 0; c < C; ++c)
            out[static_cast<size_t>(((c * L + s) * H + y) * W + x)] =
                dv[static_cast<size_t>((c * H + y) * W + x)] -
                sv[static_cast<size_t>((c * H + y) * W + xs)];
        }
      }
    });
    Tensor vol = make_op({1, C, L, H, W}, std::move(out), {dst, src},
                         [C, L, H, W, dir](TensorImpl& self) {
                           auto& pd = *self.parents[0];
                           auto& ps = *self.parents[1];
                           if (pd.requires_grad) pd.ensure_grad();
                           if (ps.requires_grad) ps.ensure_grad();
                           for (int c = 0; c < C; ++c)
                             for (int s = 0; s < L; ++s)
                               for (int y = 0; y < H; ++y)
                                 for (int x = 0; x < W; ++x) {
                                   const int xs = x + dir * s;
                                   if (xs < 0 || xs >= W) continue;
                                   const real g = self.g[static_cast<size_t>(
                                       ((c * L + s) * H + y) * W + x)];
                                   if (pd.requires_grad)
                                     pd.g[static_cast<size_t>((c * H + y) * W + x)] += g;
                                   if (ps.requires_grad)
                                     ps.g[static_cast<size_t>((c * H + y) * W + xs)] -= g;
                                 }
                         });
    return std::make_pair(std::move(vol), std::move(in_range));
  };

  auto [lv, lm] = one_view(feat_left, feat_right, -1);
  auto [rv, rm] = one_view(feat_right, feat_left, +1);
  CostVolume left{std::move(lv), max_disparity, View::kLeft, std::move(lm)};
  CostVolume right{std::move(rv), max_disparity, View::kRight, std::move(rm)};
  return {std::move(left), std::move(right)};
}

DisparityField soft_argmax_disparity(const Tensor& cost) {
  if (cost.ndim() != 3) fail_shape("soft argmax expects a [D,H,W] cost tensor");
  const int D = cost.dim(0), H = cost.dim(1), W = cost.dim(2);
  const i64 hw = static_cast<i64>(H) * W;
  const auto& cv = cost.values();
  std::vector<real> out(static_cast<size_t>(hw), real(0));
  // Kept for the backward closure: p is the softmax of -cost per pixel.
  auto p = std::make_shared<std::vector<real>>(cv.size(), real(0));
  parallel_for(hw, [&](i64 b, i64 e) {
    for (i64 i = b; i < e; ++i) {
      real lo = cv[static_cast<size_t>(i)];
      for (int d = 1; d < D; ++d)
        lo = std::min(lo, cv[static_cast<size_t>(d * hw + i)]);
      real z = 0;
      for (int d = 0; d < D; ++d) {
        const real e_ = std::exp(lo - cv[static_cast<size_t>(d * hw + i)]);
        (*p)[static_cast<size_t>(d * hw + i)] = e_;
        z += e_;
      }
      real acc = 0;
      for (int d = 0; d < D; ++d) {
        const real pd = (*p)[static_cast<size_t>(d * hw + i)] / z;
        (*p)[static_cast<size_t>(d * hw + i)] = pd;
        acc += real(d) * pd;
      }
      out[static_cast<size_t>(i)] = acc;
    }
  });
  Tensor disp = make_op({H, W}, std::move(out), {cost},
                        [D, hw, p](TensorImpl& self) {
                          auto& pc = *self.parents[0];
                          if (!pc.requires_grad) return;
                          pc.ensure_grad();
                          // d disp / d C_e = -p_e (e - disp)
                          for (i64 i = 0; i < hw; ++i) {
                            const real g = self.g[static_cast<size_t>(i)];
                            const real di = self.v[static_cast<size_t>(i)];
                            for (int d = 0; d < D; ++d)
                              pc.g[static_cast<size_t>(d * hw + i)] -=
                                  g * (*p)[static_cast<size_t>(d * hw + i)] * (real(d) - di);
                          }
                        });
  return DisparityField::dense(std::move(disp), View::kLeft);
}

Tensor warp_horizontal(const Tensor& source, const Tensor& disp,
                       std::vector<std::uint8_t>* valid_out) {
  if (source.ndim() != 3) fail_shape("warp expects a [C,H,W] source");
  if (disp.ndim() != 2 || disp.dim(0) != source.dim(1) || disp.dim(1) != source.dim(2))
    fail_shape("warp disparity must be [H,W] matching the source");
  const int C = source.dim(0), H = source.dim(1), W = source.dim(2);
  const auto& sv = source.values();
  const auto& dv = disp.values();
  std::vector<real> out(static_cast<size_t>(C) * H * W, real(0));
  auto valid = std::make_shared<std::vector<std::uint8_t>>(
      static_cast<size_t>(H) * W, 1);
  // Sampling plan per pixel, reused by the backward closure.
  auto x0s = std::make_shared<std::vector<int>>(static_cast<size_t>(H) * W);
  auto fr = std::make_shared<std::vector<real>>(static_cast<size_t>(H) * W);
  parallel_for(static_cast<i64>(H) * W, [&](i64 b, i64 e) {
    for (i64 i = b; i < e; ++i) {
      const int y = static_cast<int>(i) / W, x = static_cast<int>(i) % W;
      real xf = real(x) - dv[static_cast<size_t>(i)];
      // the negated comparison also catches non-finite disparities
      if (!(xf >= 0 && xf <= real(W - 1))) {
        (*valid)[static_cast<size_t>(i)] = 0;
        xf = std::isfinite(xf) ? std::clamp(xf, real(0), real(W - 1)) : real(0);
      }
      int x0 = static_cast<int>(std::floor(xf));
      if (x0 > W - 2) x0 = W - 2;
      if (W == 1) x0 = 0;
      const real f = (W == 1) ? real(0) : xf - real(x0);
      (*x0s)[static_cast<size_t>(i)] = x0;
      (*fr)[static_cast<size_t>(i)] = f;
      const int x1 = std::min(x0 + 1, W - 1);
      for (int c = 0; c < C; ++c) {
        const size_t row = static_cast<size_t>((c * H + y)) * W;
        out[row + static_cast<size_t>(x)] =
            (real(1) - f) * sv[row + static_cast<size_t>(x0)] +
            f * sv[row + static_cast<size_t>(x1)];
      }
    }
  });
  if (valid_out) *valid_out = *valid;
  return make_op({C, H, W}, std::move(out), {source, disp},
                 [C, H, W, valid, x0s, fr](TensorImpl& self) {
                   auto& ps = *self.parents[0];
                   auto& pd = *self.parents[1];
                   if (ps.requires_grad) ps.ensure_grad();
                   if (pd.requires_grad) pd.ensure_grad();
                   for (int y = 0; y < H; ++y)
                     for (int x = 0; x < W; ++x) {
                       const size_t i = static_cast<size_t>(y) * W + x;
                       const int x0 = (*x0s)[i];
                       const int x1 = std::min(x0 + 1, W - 1);
                       const real f = (*fr)[i];
                       const bool clamped = !(*valid)[i];
                       for (int c = 0; c < C; ++c) {
                         const size_t row = static_cast<size_t>(c * H + y) * W;
                         const real g = self.g[row + static_cast<size_t>(x)];
                         if (ps.requires_grad) {
                           ps.g[row + static_cast<size_t>(x0)] += (real(1) - f) * g;
                           ps.g[row + static_cast<size_t>(x1)] += f * g;
                         }
                         // d out / d disp = -(src[x1] - src[x0]); zero once clamped
                         if (pd.requires_grad && !clamped)
                           pd.g[i] -= g * (ps.v[row + static_cast<size_t>(x1)] -
                                           ps.v[row + static_cast<size_t>(x0)]);
                       }
                     }
                 });
}

ConsistencyMaps consistency_maps(const Tensor& img_left, const Tensor& img_right,
                                 const DisparityField& disp_left,
                                 const DisparityField& disp_right,
                                 bool warp_with_source_disparity) {
  if (!same_shape(img_left, img_right)) fail_shape("stereo images must match in shape");
  const Tensor& driver = warp_with_source_disparity ? disp_right.disp : disp_left.disp;
  ConsistencyMaps m;
  std::vector<std::uint8_t> vp, vg;
  m.e_p = abs_diff(img_left, warp_horizontal(img_right, driver, &vp));
  Tensor dr3 = reshape(disp_right.disp, {1, disp_right.height(), disp_right.width()});
  Tensor warped_d = warp_horizontal(dr3, driver, &vg);
  m.e_g = abs_diff(disp_left.disp,
                   reshape(warped_d, {disp_left.height(), disp_left.width()}));
  m.valid.resize(vp.size());
  for (size_t i = 0; i < vp.size(); ++i)
    m.valid[i] = (vp[i] && vg[i] && disp_left.valid[i]) ? 1 : 0;
  return m;
}

OcclusionMap occlusion_from_consistency(const DisparityField& disp_left,
                                        const DisparityField& disp_right,
                                        real tau) {
  if (!same_shape(disp_left.disp, disp_right.disp))
    fail_shape("disparity fields must match in shape");
  const int H = disp_left.height(), W = disp_left.width();
  const auto& dl = disp_left.disp.values();
  const auto& dr = disp_right.disp.values();
  std::vector<real> occ(static_cast<size_t>(H) * W, real(0));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const size_t i = static_cast<size_t>(y) * W + x;
      const real xf = real(x) - dl[i];
      bool occluded = false;
      if (!(xf >= 0 && xf <= real(W - 1))) {  // also catches non-finite input
        occluded = true;
      } else {
        const int x0 = std::min(static_cast<int>(std::floor(xf)), W - 2);
        const int xa = std::max(x0, 0), xb = std::min(x0 + 1, W - 1);
        const real f = std::clamp(xf - real(x0), real(0), real(1));
        const real d = (real(1) - f) * dr[static_cast<size_t>(y) * W + xa] +
                       f * dr[static_cast<size_t>(y) * W + xb];
        occluded = std::abs(dl[i] - d) > tau;
      }
      occ[i] = occluded ? real(1) : real(0);
    }
  return OcclusionMap{Tensor::from({H, W}, std::move(occ))};
}

DepthMap disparity_to_depth(const DisparityField& disp, const CameraRig& rig,
                            real min_disparity) {
  rig.validate();
  DepthMap d;
  d.height = disp.height();
  d.width = disp.width();
  const auto& dv = disp.disp.values();
  d.depth.assign(dv.size(), real(0));
  d.valid.assign(dv.size(), 0);
  for (size_t i = 0; i < dv.size(); ++i) {
    if (!disp.valid[i] || dv[i] < min_disparity) continue;
    d.depth[i] = rig.focal * rig.baseline / dv[i];
    d.valid[i] = 1;
  }
  return d;
}

DisparityField depth_to_disparity(const DepthMap& depth, const CameraRig& rig) {
  rig.validate();
  std::vector<real> dv(depth.depth.size(), real(0));
  for (size_t i = 0; i < dv.size(); ++i)
    if (depth.valid[i] && depth.depth[i] > 0)
      dv[i] = rig.focal * rig.baseline / depth.depth[i];
  DisparityField f;
  f.disp = Tensor::from({depth.height, depth.width}, std::move(dv));
  f.valid.assign(depth.depth.size(), 0);
  for (size_t i = 0; i < depth.depth.size(); ++i)
    f.valid[i] = (depth.valid[i] && depth.depth[i] > 0) ? 1 : 0;
  return f;
}

NormalMap normals_from_depth(const DepthMap& depth, const CameraRig& rig) {
  rig.validate();
  const int H = depth.height, W = depth.width;
  NormalMap nm;
  nm.height = H;
  nm.width = W;
  nm.n.assign(static_cast<size_t>(3) * H * W, real(0));
  nm.valid.assign(static_cast<size_t>(H) * W, 0);
  auto point = [&](int x, int y) {
    const real z = depth.depth[static_cast<size_t>(y) * W + x];
    return std::array<real, 3>{(real(x) - rig.cx) / rig.focal * z,
                               (real(y) - rig.cy) / rig.focal * z, z};
  };
  for (int y = 0; y + 1 < H; ++y)
    for (int x = 0; x + 1 < W; ++x) {
      const size_t i = static_cast<size_t>(y) * W + x;
      if (!depth.valid[i] || !depth.valid[i + 1] || !depth.valid[i + W]) continue;
      const auto p = point(x, y), px = point(x + 1, y), py = point(x, y + 1);
      const std::array<real, 3> dx = {px[0] - p[0], px[1] - p[1], px[2] - p[2]};
      const std::array<real, 3> dy = {py[0] - p[0], py[1] - p[1], py[2] - p[2]};
      // cross(dy, dx) points toward the camera for a front-facing surface
      std::array<real, 3> n = {dy[1] * dx[2] - dy[2] * dx[1],
                               dy[2] * dx[0] - dy[0] * dx[2],
                               dy[0] * dx[1] - dy[1] * dx[0]};
      const real len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
      if (!(len > 0)) continue;
      nm.n[3 * i + 0] = n[0] / len;
      nm.n[3 * i + 1] = n[1] / len;
      nm.n[3 * i + 2] = n[2] / len;
      nm.valid[i] = 1;
    }
  return nm;
}

real normal_error_degrees(const NormalMap& pred, const NormalMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    fail_shape("normal maps must match in shape");
  std::vector<real> angles;
  for (size_t i = 0; i < pred.valid.size(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    real dot = 0;
    for (int k = 0; k < 3; ++k) dot += pred.n[3 * i + k] * gt.n[3 * i + k];
    dot = std::clamp(dot, real(-1), real(1));
    angles.push_back(std::acos(dot) * real(180.0 / 3.14159265358979323846));
  }
  if (angles.empty()) fail_state("no jointly valid pixels for normal error");
  return pairwise_sum(angles) / real(angles.size());
}

}  // namespace stereo
