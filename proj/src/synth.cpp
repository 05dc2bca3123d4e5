#include "stereo/synth.hpp"

#include <algorithm>
#include <cmath>

namespace stereo {

namespace {

using Vec3 = std::array<real, 3>;

Vec3 normalized(Vec3 v) {
  const real len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(len > 0)) fail_config("zero-length direction");
  return {v[0] / len, v[1] / len, v[2] / len};
}

std::uint64_t mix64(std::uint64_t x) {  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

real lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(x) * 0x8da6b343ULL ^
                                       mix64(static_cast<std::uint64_t>(y) * 0xd8163841ULL ^
                                             static_cast<std::uint64_t>(z) * 0xcb1ab31fULL)));
  return real(h >> 11) / real(1ULL << 53);
}

real smooth(real t) { return t * t * (3 - 2 * t); }

real value_noise(const Vec3& p, std::uint64_t seed) {
  const real fx = std::floor(p[0]), fy = std::floor(p[1]), fz = std::floor(p[2]);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const real tx = smooth(p[0] - fx), ty = smooth(p[1] - fy), tz = smooth(p[2] - fz);
  real acc[2][2];
  for (int dy = 0; dy < 2; ++dy)
    for (int dz = 0; dz < 2; ++dz) {
      const real a = lattice(ix, iy + dy, iz + dz, seed);
      const real b = lattice(ix + 1, iy + dy, iz + dz, seed);
      acc[dy][dz] = a + (b - a) * tx;
    }
  const real c0 = acc[0][0] + (acc[0][1] - acc[0][0]) * tz;
  const real c1 = acc[1][0] + (acc[1][1] - acc[1][0]) * tz;
  return c0 + (c1 - c0) * ty;
}

struct Hit {
  real z = 0;
  int prim = -1;
  Vec3 p{0, 0, 0};
  Vec3 n{0, 0, -1};
};

constexpr real kZNear = real(0.01);

// Ray from (ox,0,0) through continuous pixel (px,py); direction has unit z,
// so the ray parameter equals camera depth.
bool trace(const std::vector<Primitive>& prims, const CameraRig& rig, real ox, real px,
           real py, Hit& best) {
  const real dx = (px - rig.cx) / rig.focal;
  const real dy = (py - rig.cy) / rig.focal;
  best.prim = -1;
  best.z = real(1e30);
  for (size_t pi = 0; pi < prims.size(); ++pi) {
    const Primitive& pr = prims[pi];
    real z = -1;
    Vec3 n{0, 0, -1};
    switch (pr.kind) {
      case PrimitiveKind::kPlane:
      case PrimitiveKind::kSlantedPlane: {
        if (pr.kind == PrimitiveKind::kPlane) {
          z = pr.z0;
        } else {
          const real denom = 1 - pr.ax * dx - pr.ay * dy;
          if (std::abs(denom) < real(1e-12)) break;
          z = (pr.z0 + pr.ax * ox) / denom;
        }
        if (z <= kZNear) break;
        const real X = ox + z * dx, Y = z * dy;
        if (X < pr.x0 || X > pr.x1 || Y < pr.y0 || Y > pr.y1) {
          z = -1;
          break;
        }
        n = normalized({pr.ax, pr.ay, -1});
        break;
      }
      case PrimitiveKind::kSphere: {
        const Vec3 oc = {ox - pr.center[0], -pr.center[1], -pr.center[2]};
        const real a = dx * dx + dy * dy + 1;
        const real b = 2 * (oc[0] * dx + oc[1] * dy + oc[2]);
        const real c = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] -
                       pr.radius * pr.radius;
        const real disc = b * b - 4 * a * c;
        if (disc < 0) break;
        const real sq = std::sqrt(disc);
        real t = (-b - sq) / (2 * a);
        if (t <= kZNear) t = (-b + sq) / (2 * a);
        if (t <= kZNear) break;
        z = t;
        const Vec3 hp = {ox + z * dx, z * dy, z};
        n = normalized({(hp[0] - pr.center[0]) / pr.radius,
                        (hp[1] - pr.center[1]) / pr.radius,
                        (hp[2] - pr.center[2]) / pr.radius});
        break;
      }
      case PrimitiveKind::kBox: {
        real tmin = kZNear, tmax = real(1e30);
        int axis = -1;
        real sign = 0;
        const real o[3] = {ox, 0, 0};
        const real d[3] = {dx, dy, 1};
        bool miss = false;
        for (int k = 0; k < 3 && !miss; ++k) {
          if (std::abs(d[k]) < real(1e-12)) {
            if (o[k] < pr.bmin[static_cast<size_t>(k)] ||
                o[k] > pr.bmax[static_cast<size_t>(k)])
              miss = true;
            continue;
          }
          real t0 = (pr.bmin[static_cast<size_t>(k)] - o[k]) / d[k];
          real t1 = (pr.bmax[static_cast<size_t>(k)] - o[k]) / d[k];
          real s = d[k] > 0 ? real(-1) : real(1);  // entering face normal sign
          if (t0 > t1) std::swap(t0, t1);
          if (t0 > tmin) {
            tmin = t0;
            axis = k;
            sign = s;
          }
          tmax = std::min(tmax, t1);
          if (tmin > tmax) miss = true;
        }
        if (miss || axis < 0) break;
        z = tmin;
        n = {0, 0, 0};
        n[static_cast<size_t>(axis)] = sign;
        break;
      }
    }
    if (z > kZNear && z < best.z) {
      best.z = z;
      best.prim = static_cast<int>(pi);
      best.p = {ox + z * dx, z * dy, z};
      best.n = n;
    }
  }
  return best.prim >= 0;
}

Vec3 base_color(const Primitive& pr, const Vec3& p) {
  switch (pr.texture) {
    case TextureKind::kChecker: {
      const auto cell = static_cast<std::int64_t>(std::floor(p[0] / pr.tex_scale)) +
                        static_cast<std::int64_t>(std::floor(p[1] / pr.tex_scale)) +
                        static_cast<std::int64_t>(std::floor(p[2] / pr.tex_scale));
      return (cell & 1) ? pr.color_b : pr.color_a;
    }
    case TextureKind::kNoise: {
      real t = 0, amp = real(0.5), freq = 1 / pr.tex_scale;
      for (int o = 0; o < 4; ++o) {
        t += amp * value_noise({p[0] * freq, p[1] * freq, p[2] * freq},
                               pr.tex_seed + static_cast<std::uint64_t>(o));
        amp *= real(0.5);
        freq *= 2;
      }
      Vec3 c;
      for (int k = 0; k < 3; ++k)
        c[static_cast<size_t>(k)] = pr.color_a[static_cast<size_t>(k)] +
                                    (pr.color_b[static_cast<size_t>(k)] -
                                     pr.color_a[static_cast<size_t>(k)]) *
                                        std::clamp(t, real(0), real(1));
      return c;
    }
    case TextureKind::kFlat:
      return pr.color_a;
  }
  return pr.color_a;
}

bool in_reflective_patch(const Primitive& pr, const Vec3& p) {
  return pr.reflective && p[0] >= pr.rx0 && p[0] <= pr.rx1 && p[1] >= pr.ry0 &&
         p[1] <= pr.ry1;
}

// 0 = left eye, 1 = right eye, 2 = clean (right-eye paint, used as the
// photometric reference for the left image).
Vec3 shaded_color(const Primitive& pr, const Hit& h, const Vec3& light, int eye) {
  Vec3 c;
  if (in_reflective_patch(pr, h.p))
    c = eye == 0 ? Vec3{real(0.85), real(0.15), real(0.15)}
                 : Vec3{real(0.15), real(0.85), real(0.15)};
  else
    c = base_color(pr, h.p);
  const real lambert = std::max(
      real(0.25), h.n[0] * light[0] + h.n[1] * light[1] + h.n[2] * light[2]);
  for (auto& v : c) v = std::clamp(v * lambert, real(0), real(1));
  return c;
}

std::pair<real, real> depth_range(const Primitive& pr) {
  switch (pr.kind) {
    case PrimitiveKind::kPlane:
      return {pr.z0, pr.z0};
    case PrimitiveKind::kSlantedPlane: {
      // z is linear in (X,Y); footprint corners bound it. Infinite footprints
      // are only safe for fronto-parallel planes.
      if (pr.x0 < -real(1e8) || pr.x1 > real(1e8) || pr.y0 < -real(1e8) ||
          pr.y1 > real(1e8))
        fail_config("slanted plane needs a finite footprint");
      real lo = real(1e30), hi = -real(1e30);
      for (real X : {pr.x0, pr.x1})
        for (real Y : {pr.y0, pr.y1}) {
          const real z = pr.z0 + pr.ax * X + pr.ay * Y;
          lo = std::min(lo, z);
          hi = std::max(hi, z);
        }
      return {lo, hi};
    }
    case PrimitiveKind::kSphere:
      return {pr.center[2] - pr.radius, pr.center[2] + pr.radius};
    case PrimitiveKind::kBox:
      return {pr.bmin[2], pr.bmax[2]};
  }
  return {0, 0};
}

}  // namespace

void SceneSpec::validate(const CameraRig& rig) const {
  rig.validate();
  if (max_disparity < 4) fail_config("disparity budget too small");
  if (primitives.empty()) fail_config("scene needs at least one primitive");
  const real fb = rig.focal * rig.baseline;
  for (const auto& pr : primitives) {
    auto [zlo, zhi] = depth_range(pr);
    if (!(zlo > 0)) fail_config("primitive reaches non-positive depth");
    const real dmax = fb / zlo, dmin = fb / zhi;
    if (dmin < real(1) || dmax > real(max_disparity - 2))
      fail_config("primitive outside the disparity budget [1, D-2]");
  }
}

StereoSample generate_scene(const SceneSpec& spec, const CameraRig& rig, int H, int W) {
  spec.validate(rig);
  if (H < 2 || W < 2) fail_config("scene dimensions too small");
  const Vec3 light = normalized(spec.light);
  const real fb = rig.focal * rig.baseline;
  const size_t npx = static_cast<size_t>(H) * W;

  StereoSample s;
  s.rig = rig;
  s.image_left = Tensor::zeros({3, H, W});
  s.image_right = Tensor::zeros({3, H, W});
  s.clean_left = Tensor::zeros({3, H, W});
  Tensor dl = Tensor::zeros({H, W}), dr = Tensor::zeros({H, W});
  Tensor ol = Tensor::zeros({H, W}), orr = Tensor::zeros({H, W});
  s.exclusion.assign(npx, 0);
  std::vector<std::uint8_t> covered(2 * npx, 1);

  parallel_for(static_cast<i64>(npx), [&](i64 b, i64 e) {
    for (i64 i = b; i < e; ++i) {
      const int y = static_cast<int>(i) / W, x = static_cast<int>(i) % W;
      for (int eye = 0; eye < 2; ++eye) {
        const real ox = eye == 0 ? real(0) : rig.baseline;
        Hit h;
        if (!trace(spec.primitives, rig, ox, real(x), real(y), h)) {
          covered[static_cast<size_t>(eye) * npx + static_cast<size_t>(i)] = 0;
          continue;
        }
        const Primitive& pr = spec.primitives[static_cast<size_t>(h.prim)];
        const real d = fb / h.z;
        Tensor& img = eye == 0 ? s.image_left : s.image_right;
        (eye == 0 ? dl : dr).values()[static_cast<size_t>(i)] = d;
        const Vec3 c = shaded_color(pr, h, light, eye);
        for (int k = 0; k < 3; ++k)
          img.values()[static_cast<size_t>((k * H + y) * W + x)] =
              c[static_cast<size_t>(k)];
        if (eye == 0) {
          const Vec3 cc = shaded_color(pr, h, light, 2);
          for (int k = 0; k < 3; ++k)
            s.clean_left.values()[static_cast<size_t>((k * H + y) * W + x)] =
                cc[static_cast<size_t>(k)];
          s.exclusion[static_cast<size_t>(i)] = in_reflective_patch(pr, h.p) ? 1 : 0;
        }
        // occlusion: project into the other view and re-trace
        const real xo = eye == 0 ? real(x) - d : real(x) + d;
        bool occ = xo < 0 || xo > real(W - 1);
        if (!occ) {
          Hit h2;
          const real ox2 = eye == 0 ? rig.baseline : real(0);
          if (!trace(spec.primitives, rig, ox2, xo, real(y), h2))
            occ = true;
          else
            occ = h2.z < h.z * (1 - real(1e-9));
        }
        (eye == 0 ? ol : orr).values()[static_cast<size_t>(i)] = occ ? real(1) : real(0);
      }
    }
  });
  for (size_t i = 0; i < 2 * npx; ++i)
    if (!covered[i]) fail_config("scene does not cover the frame; add a background plane");

  s.disp_left = DisparityField::dense(std::move(dl), View::kLeft);
  s.disp_right = DisparityField::dense(std::move(dr), View::kRight);
  s.occ_left = OcclusionMap{std::move(ol)};
  s.occ_right = OcclusionMap{std::move(orr)};
  return s;
}

std::vector<std::uint8_t> exclusion_mask(const Tensor& image, const Tensor& reference,
                                         real threshold) {
  if (!same_shape(image, reference)) fail_shape("exclusion images must match in shape");
  if (image.ndim() != 3) fail_shape("exclusion expects [C,H,W] images");
  const int C = image.dim(0);
  const size_t npx = static_cast<size_t>(image.dim(1)) * image.dim(2);
  std::vector<std::uint8_t> mask(npx, 0);
  for (size_t i = 0; i < npx; ++i) {
    real peak = 0;
    for (int c = 0; c < C; ++c)
      peak = std::max(peak, std::abs(image.values()[static_cast<size_t>(c) * npx + i] -
                                     reference.values()[static_cast<size_t>(c) * npx + i]));
    mask[i] = peak > threshold ? 1 : 0;
  }
  return mask;
}

Tensor normalize_image(const Tensor& image) { return scale(add_scalar(image, real(-0.5)), real(2)); }

Tensor denormalize_image(const Tensor& image) { return add_scalar(scale(image, real(0.5)), real(0.5)); }

SceneSpec random_scene_spec(std::uint64_t seed, const CameraRig& rig, int H, int W,
                            int max_disparity, bool integer_disparity,
                            real reflective_fraction) {
  rig.validate();
  if (max_disparity < 8) fail_config("disparity budget too small for a random scene");
  Rng rng(seed ^ 0x5357a3b1ULL);
  SceneSpec spec;
  spec.seed = seed;
  spec.max_disparity = max_disparity;
  const real fb = rig.focal * rig.baseline;
  const int dmax = max_disparity - 2;

  // frustum footprint (plus slack) at a given depth
  auto extent_x = [&](real z) {
    return std::pair<real, real>{(0 - rig.cx) / rig.focal * z - real(0.05) * z,
                                 (real(W - 1) - rig.cx) / rig.focal * z + real(0.3) * z};
  };
  auto extent_y = [&](real z) {
    return std::pair<real, real>{(0 - rig.cy) / rig.focal * z - real(0.05) * z,
                                 (real(H - 1) - rig.cy) / rig.focal * z + real(0.05) * z};
  };
  auto random_colors = [&](Primitive& pr) {
    for (int k = 0; k < 3; ++k) {
      pr.color_a[static_cast<size_t>(k)] = rng.uniform(real(0.45), real(0.95));
      pr.color_b[static_cast<size_t>(k)] = rng.uniform(real(0.05), real(0.45));
    }
    // noise texture only: flat surfaces make matching ill-posed, and checker
    // periods fall inside the disparity search range, so either would put a
    // floor under the error of any learned model
    pr.texture = TextureKind::kNoise;
    pr.tex_seed = rng.eng();
  };
  auto maybe_reflective = [&](Primitive& pr, real z) {
    if (rng.uniform(0, 1) >= reflective_fraction) return;
    auto [xl, xr] = extent_x(z);
    auto [yl, yr] = extent_y(z);
    const real w = (xr - xl) * rng.uniform(real(0.08), real(0.2));
    const real h = (yr - yl) * rng.uniform(real(0.08), real(0.2));
    pr.reflective = true;
    pr.rx0 = rng.uniform(xl, xr - w);
    pr.rx1 = pr.rx0 + w;
    pr.ry0 = rng.uniform(yl, yr - h);
    pr.ry1 = pr.ry0 + h;
  };

  // background: full-frame fronto plane at a far (small) disparity
  {
    Primitive bg;
    bg.kind = PrimitiveKind::kPlane;
    const real dbg = integer_disparity
                         ? real(rng.uniform_int(1, 4))
                         : rng.uniform(real(1.2), real(4));
    bg.z0 = fb / dbg;
    bg.tex_scale = bg.z0 * rng.uniform(real(0.15), real(0.3));
    random_colors(bg);
    spec.primitives.push_back(bg);
  }

  if (integer_disparity) {
    // fronto planes on integer disparities, pairwise separation >= 2 px
    std::vector<int> candidates;
    for (int d = 7; d <= dmax; d += 2) candidates.push_back(d);
    for (size_t i = candidates.size(); i > 1; --i)
      std::swap(candidates[i - 1],
                candidates[static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(i) - 1))]);
    const int count = static_cast<int>(rng.uniform_int(2, 3));
    for (int k = 0; k < count && k < static_cast<int>(candidates.size()); ++k) {
      Primitive pl;
      pl.kind = PrimitiveKind::kPlane;
      pl.z0 = fb / real(candidates[static_cast<size_t>(k)]);
      auto [xl, xr] = extent_x(pl.z0);
      auto [yl, yr] = extent_y(pl.z0);
      const real w = (xr - xl) * rng.uniform(real(0.25), real(0.5));
      const real h = (yr - yl) * rng.uniform(real(0.25), real(0.5));
      pl.x0 = rng.uniform(xl, xr - w);
      pl.x1 = pl.x0 + w;
      pl.y0 = rng.uniform(yl, yr - h);
      pl.y1 = pl.y0 + h;
      pl.tex_scale = pl.z0 * rng.uniform(real(0.12), real(0.25));
      random_colors(pl);
      maybe_reflective(pl, pl.z0);
      spec.primitives.push_back(pl);
    }
    return spec;
  }

  // 1-2 foreground planes (fronto or slanted): multiple disparities, slants
  // and occlusion edges, but few enough discontinuities that a desk-scale
  // training budget can learn the distribution. Curved/box primitives stay
  // available for targeted tests and explicit specs.
  const int count = static_cast<int>(rng.uniform_int(1, 2));
  for (int k = 0; k < count; ++k) {
    Primitive pr;
    const int kind = static_cast<int>(rng.uniform_int(0, 1));
    const real dc = rng.uniform(real(5), real(dmax - 3));
    const real zc = fb / dc;
    auto [xl, xr] = extent_x(zc);
    auto [yl, yr] = extent_y(zc);
    switch (kind) {
      case 0: {
        pr.kind = PrimitiveKind::kPlane;
        pr.z0 = zc;
        break;
      }
      case 1: {
        pr.kind = PrimitiveKind::kSlantedPlane;
        // pick slopes, then solve z0 so depth at the footprint center is zc
        pr.ax = rng.uniform(real(-0.12), real(0.12));
        pr.ay = rng.uniform(real(-0.12), real(0.12));
        break;
      }
      case 2: {
        pr.kind = PrimitiveKind::kSphere;
        const real zmin_ok = fb / real(dmax);
        const real zmax_ok = fb / real(1.05);
        const real rmax = std::min(zc - zmin_ok, zmax_ok - zc) * real(0.9);
        pr.radius = rng.uniform(real(0.15), real(0.8)) * std::max(rmax, real(0));
        pr.center = {rng.uniform(xl, xr), rng.uniform(yl, yr), zc};
        break;
      }
      default: {
        pr.kind = PrimitiveKind::kBox;
        const real zmin_ok = fb / real(dmax);
        const real hz = std::min(zc - zmin_ok, zc * real(0.15)) *
                        rng.uniform(real(0.2), real(0.9));
        const real cx = rng.uniform(xl, xr), cy = rng.uniform(yl, yr);
        const real hx = (xr - xl) * rng.uniform(real(0.05), real(0.2));
        const real hy = (yr - yl) * rng.uniform(real(0.05), real(0.2));
        pr.bmin = {cx - hx, cy - hy, zc - hz};
        pr.bmax = {cx + hx, cy + hy, zc + hz};
        break;
      }
    }
    if (pr.kind == PrimitiveKind::kPlane || pr.kind == PrimitiveKind::kSlantedPlane) {
      const real w = (xr - xl) * rng.uniform(real(0.2), real(0.45));
      const real h = (yr - yl) * rng.uniform(real(0.2), real(0.45));
      pr.x0 = rng.uniform(xl, xr - w);
      pr.x1 = pr.x0 + w;
      pr.y0 = rng.uniform(yl, yr - h);
      pr.y1 = pr.y0 + h;
      if (pr.kind == PrimitiveKind::kSlantedPlane) {
        const real mx = (pr.x0 + pr.x1) / 2, my = (pr.y0 + pr.y1) / 2;
        pr.z0 = zc - pr.ax * mx - pr.ay * my;
        // shrink slopes until the footprint stays within the budget
        for (int guard = 0; guard < 32; ++guard) {
          auto [zlo, zhi] = std::pair<real, real>{real(1e30), -real(1e30)};
          for (real X : {pr.x0, pr.x1})
            for (real Y : {pr.y0, pr.y1}) {
              const real z = pr.z0 + pr.ax * X + pr.ay * Y;
              zlo = std::min(zlo, z);
              zhi = std::max(zhi, z);
            }
          if (zlo > fb / real(dmax) && zhi < fb / real(1.05)) break;
          pr.ax *= real(0.5);
          pr.ay *= real(0.5);
          pr.z0 = zc - pr.ax * mx - pr.ay * my;
        }
      }
    }
    pr.tex_scale = zc * rng.uniform(real(0.12), real(0.25));
    random_colors(pr);
    maybe_reflective(pr, zc);
    spec.primitives.push_back(pr);
  }
  return spec;
}

std::pair<SceneSpec, Pose> translate_scene(const SceneSpec& spec,
                                           const std::array<real, 3>& position) {
  SceneSpec out = spec;
  const real px = position[0], py = position[1], pz = position[2];
  for (auto& pr : out.primitives) {
    switch (pr.kind) {
      case PrimitiveKind::kPlane:
        pr.z0 -= pz;
        break;
      case PrimitiveKind::kSlantedPlane:
        // z' = z - pz with X' = X - px, Y' = Y - py keeps the slopes and
        // shifts the intercept.
        pr.z0 += pr.ax * px + pr.ay * py - pz;
        break;
      case PrimitiveKind::kSphere:
        for (int i = 0; i < 3; ++i) pr.center[i] -= position[i];
        break;
      case PrimitiveKind::kBox:
        for (int i = 0; i < 3; ++i) {
          pr.bmin[i] -= position[i];
          pr.bmax[i] -= position[i];
        }
        break;
    }
    if (pr.kind == PrimitiveKind::kPlane || pr.kind == PrimitiveKind::kSlantedPlane) {
      pr.x0 -= px;
      pr.x1 -= px;
      pr.y0 -= py;
      pr.y1 -= py;
    }
    if (pr.reflective) {
      pr.rx0 -= px;
      pr.rx1 -= px;
      pr.ry0 -= py;
      pr.ry1 -= py;
    }
  }
  Pose pose;
  pose.t = position;
  return {out, pose};
}

SceneSpec room_scene(const CameraRig& rig, int H, int W, int max_disparity,
                     std::array<real, 3>* bounds_min,
                     std::array<real, 3>* bounds_max) {
  const real fb = rig.focal * rig.baseline;
  // keep the wall/floor foreshortening moderate: disparity rises only 50%
  // from the back wall to the room's nearest edge
  const real db = real(max_disparity) / 4;           // back-wall disparity
  const real dn = std::min(real(max_disparity - 6), real(1.5) * db);
  const real zb = fb / db;                           // back wall
  const real zn = fb / dn;                           // nearest room depth
  const real z1 = zb * real(0.94);                   // slopes start just in front
  // view half-extents at the back wall
  const real hwx = (real(W) / 2) / rig.focal * zb;
  const real hwy = (real(H) / 2) / rig.focal * zb;

  SceneSpec spec;
  spec.max_disparity = max_disparity;

  Primitive back;
  back.kind = PrimitiveKind::kPlane;
  back.z0 = zb;
  back.texture = TextureKind::kNoise;
  back.tex_scale = zb * real(0.2);
  back.color_a = {real(0.85), real(0.8), real(0.7)};
  back.color_b = {real(0.25), real(0.3), real(0.4)};
  spec.primitives.push_back(back);

  // right wall: z falls from z1 at X1 to zn at X2
  Primitive wall;
  wall.kind = PrimitiveKind::kSlantedPlane;
  const real X1 = real(0.35) * hwx, X2 = hwx;
  wall.ax = (zn - z1) / (X2 - X1);
  wall.z0 = z1 - wall.ax * X1;
  wall.x0 = X1;
  wall.x1 = X2;
  wall.y0 = -4 * hwy;
  wall.y1 = 4 * hwy;
  wall.texture = TextureKind::kNoise;
  wall.tex_scale = zb * real(0.15);
  wall.color_a = {real(0.9), real(0.5), real(0.4)};
  wall.color_b = {real(0.2), real(0.15), real(0.1)};
  spec.primitives.push_back(wall);

  // floor: same slope along +Y (image-down)
  Primitive floor;
  floor.kind = PrimitiveKind::kSlantedPlane;
  const real Y1 = real(0.35) * hwy, Y2 = hwy;
  floor.ay = (zn - z1) / (Y2 - Y1);
  floor.z0 = z1 - floor.ay * Y1;
  floor.y0 = Y1;
  floor.y1 = Y2;
  floor.x0 = -4 * hwx;
  floor.x1 = 4 * hwx;
  floor.texture = TextureKind::kNoise;
  floor.tex_scale = zb * real(0.15);
  floor.color_a = {real(0.4), real(0.7), real(0.45)};
  floor.color_b = {real(0.1), real(0.2), real(0.12)};
  spec.primitives.push_back(floor);

  if (bounds_min) *bounds_min = {-hwx * real(1.05), -hwy * real(1.05), zn * real(0.9)};
  if (bounds_max) *bounds_max = {hwx * real(1.05), hwy * real(1.05), zb * real(1.02)};
  return spec;
}

}  // namespace stereo
