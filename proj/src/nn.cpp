#include <algorithm>
#include <cmath>

#include "stereo/nn.hpp"

namespace stereo {

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, BnMode mode) {
  if (input.ndim() < 2) fail_shape("batch_norm input must have a channel axis");
  const int C = input.dim(1);
  if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
    fail_shape("batch_norm gamma/beta length must equal channel count");
  const int N = input.dim(0);
  const i64 S = input.numel() / (i64(N) * C);  // per-sample spatial size
  const i64 cnt = i64(N) * S;

  std::vector<real> m(C), invstd(C);
  const std::vector<real>& x = input.values();

  if (mode != BnMode::kEval) {
    for (int c = 0; c < C; ++c) {
      real s = 0;
      for (int n = 0; n < N; ++n) s += pairwise_sum(x.data() + (i64(n) * C + c) * S, S);
      m[c] = s / real(cnt);
    }
    std::vector<real> var(C);
    for (int c = 0; c < C; ++c) {
      real s = 0;
      for (int n = 0; n < N; ++n) {
        const real* p = x.data() + (i64(n) * C + c) * S;
        std::vector<real> sq(static_cast<size_t>(S), real(0));
        for (i64 i = 0; i < S; ++i) {
          const real dd = p[i] - m[c];
          sq[size_t(i)] = dd * dd;
        }
        s += pairwise_sum(sq);
      }
      var[c] = s / real(cnt);
      invstd[c] = real(1) / std::sqrt(var[c] + stats.eps);
    }
    // Running stats: unbiased variance, warm-started on the first batch.
    const real unb = cnt > 1 ? real(cnt) / real(cnt - 1) : real(1);
    if (mode == BnMode::kBatchStats) {
      // use the batch statistics but leave the running averages alone
    } else if (!stats.initialized) {
      stats.mean = m;
      stats.var.resize(size_t(C));
      for (int c = 0; c < C; ++c) stats.var[size_t(c)] = var[size_t(c)] * unb;
      stats.initialized = true;
    } else {
      for (int c = 0; c < C; ++c) {
        stats.mean[size_t(c)] =
            (real(1) - stats.momentum) * stats.mean[size_t(c)] + stats.momentum * m[size_t(c)];
        stats.var[size_t(c)] = (real(1) - stats.momentum) * stats.var[size_t(c)] +
                               stats.momentum * var[size_t(c)] * unb;
      }
    }
  } else {
    if (!stats.initialized) fail_state("batch_norm eval mode with uninitialized running stats");
    for (int c = 0; c < C; ++c) {
      m[c] = stats.mean[size_t(c)];
      invstd[c] = real(1) / std::sqrt(stats.var[size_t(c)] + stats.eps);
    }
  }

  std::vector<real> out(x.size());
  const std::vector<real>& gv = gamma.values();
  const std::vector<real>& bv = beta.values();
  parallel_for(i64(N) * C, [&](i64 b, i64 e) {
    for (i64 nc = b; nc < e; ++nc) {
      const int c = int(nc % C);
      const real* p = x.data() + nc * S;
      real* o = out.data() + nc * S;
      const real mc = m[size_t(c)], is = invstd[size_t(c)], gc = gv[size_t(c)],
                 bc = bv[size_t(c)];
      for (i64 i = 0; i < S; ++i) o[i] = gc * (p[i] - mc) * is + bc;
    }
  });

  auto xi = input.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  const bool train = mode != BnMode::kEval;  // batch-stat modes share the backward
  return make_op(input.shape(), std::move(out), {input, gamma, beta},
                 [xi, gi, bi, m, invstd, N, C, S, cnt, train](TensorImpl& self) {
                   // Per-channel reductions of g and g*xhat.
                   std::vector<real> gsum(size_t(C), 0), gxsum(size_t(C), 0);
                   for (int c = 0; c < C; ++c) {
                     const real mc = m[size_t(c)], is = invstd[size_t(c)];
                     std::vector<real> a(size_t(i64(N) * S)), bbuf(size_t(i64(N) * S));
                     for (int n = 0; n < N; ++n) {
                       const real* gp = self.g.data() + (i64(n) * C + c) * S;
                       const real* xp = xi->v.data() + (i64(n) * C + c) * S;
                       for (i64 i = 0; i < S; ++i) {
                         a[size_t(i64(n) * S + i)] = gp[i];
                         bbuf[size_t(i64(n) * S + i)] = gp[i] * (xp[i] - mc) * is;
                       }
                     }
                     gsum[size_t(c)] = pairwise_sum(a);
                     gxsum[size_t(c)] = pairwise_sum(bbuf);
                   }
                   if (gi->requires_grad) {
                     gi->ensure_grad();
                     for (int c = 0; c < C; ++c) gi->g[size_t(c)] += gxsum[size_t(c)];
                   }
                   if (bi->requires_grad) {
                     bi->ensure_grad();
                     for (int c = 0; c < C; ++c) bi->g[size_t(c)] += gsum[size_t(c)];
                   }
                   if (xi->requires_grad) {
                     xi->ensure_grad();
                     parallel_for(i64(N) * C, [&](i64 b2, i64 e2) {
                       for (i64 nc = b2; nc < e2; ++nc) {
                         const int c = int(nc % C);
                         const real mc = m[size_t(c)], is = invstd[size_t(c)],
                                    gc = gi->v[size_t(c)];
                         const real* gp = self.g.data() + nc * S;
                         const real* xp = xi->v.data() + nc * S;
                         real* dst = xi->g.data() + nc * S;
                         if (train) {
                           const real k = gc * is / real(cnt);
                           for (i64 i = 0; i < S; ++i) {
                             const real xhat = (xp[i] - mc) * is;
                             dst[i] += k * (real(cnt) * gp[i] - gsum[size_t(c)] -
                                            xhat * gxsum[size_t(c)]);
                           }
                         } else {
                           for (i64 i = 0; i < S; ++i) dst[i] += gp[i] * gc * is;
                         }
                       }
                     });
                   }
                 });
}

Tensor pool_avg_grid(const Tensor& input, int g) {
  if (input.ndim() != 4) fail_shape("pool input must be [N,C,H,W]");
  if (g < 1) fail_config("pool window must be >= 1");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (g > H || g > W) fail_config("pool window larger than spatial extent");
  const int Ho = (H + g - 1) / g, Wo = (W + g - 1) / g;

  std::vector<real> out(size_t(i64(N) * C * Ho * Wo));
  const std::vector<real>& x = input.values();
  parallel_for(i64(N) * C, [&](i64 b, i64 e) {
    for (i64 nc = b; nc < e; ++nc) {
      const real* p = x.data() + nc * H * W;
      real* o = out.data() + nc * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const int y0 = oy * g, x0 = ox * g;
          const int y1 = std::min(y0 + g, H), x1 = std::min(x0 + g, W);
          real s = 0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) s += p[y * W + xx];
          o[oy * Wo + ox] = s / real((y1 - y0) * (x1 - x0));
        }
    }
  });

  auto xi = input.impl();
  return make_op({N, C, Ho, Wo}, std::move(out), {input},
                 [xi, N, C, H, W, Ho, Wo, g](TensorImpl& self) {
                   if (!xi->requires_grad) return;
                   xi->ensure_grad();
                   parallel_for(i64(N) * C, [&](i64 b, i64 e) {
                     for (i64 nc = b; nc < e; ++nc) {
                       const real* go = self.g.data() + nc * Ho * Wo;
                       real* gx = xi->g.data() + nc * H * W;
                       for (int oy = 0; oy < Ho; ++oy)
                         for (int ox = 0; ox < Wo; ++ox) {
                           const int y0 = oy * g, x0 = ox * g;
                           const int y1 = std::min(y0 + g, H), x1 = std::min(x0 + g, W);
                           const real gv = go[oy * Wo + ox] / real((y1 - y0) * (x1 - x0));
                           for (int y = y0; y < y1; ++y)
                             for (int xx = x0; xx < x1; ++xx) gx[y * W + xx] += gv;
                         }
                     }
                   });
                 });
}

Tensor pool_global_avg(const Tensor& input) {
  if (input.ndim() != 4) fail_shape("pool input must be [N,C,H,W]");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const i64 S = i64(H) * W;
  std::vector<real> out(size_t(i64(N) * C));
  for (i64 nc = 0; nc < i64(N) * C; ++nc)
    out[size_t(nc)] = pairwise_sum(input.values().data() + nc * S, S) / real(S);
  auto xi = input.impl();
  return make_op({N, C, 1, 1}, std::move(out), {input}, [xi, N, C, S](TensorImpl& self) {
    if (!xi->requires_grad) return;
    xi->ensure_grad();
    for (i64 nc = 0; nc < i64(N) * C; ++nc) {
      const real gv = self.g[size_t(nc)] / real(S);
      real* gx = xi->g.data() + nc * S;
      for (i64 i = 0; i < S; ++i) gx[i] += gv;
    }
  });
}

namespace {

inline void lerp_axis(int out_e, int in_e, int o, int& i0, int& i1, real& w1) {
  if (out_e == 1 || in_e == 1) {
    i0 = i1 = 0;
    w1 = 0;
    return;
  }
  const real f = real(o) * real(in_e - 1) / real(out_e - 1);
  i0 = static_cast<int>(std::floor(f));
  if (i0 > in_e - 2) i0 = in_e - 2;
  i1 = i0 + 1;
  w1 = f - real(i0);
}

}  // namespace

Tensor interp_bilinear2d(const Tensor& input, int out_h, int out_w) {
  if (input.ndim() != 4) fail_shape("interp_bilinear2d input must be [N,C,H,W]");
  if (out_h < 1 || out_w < 1) fail_config("interpolation target extents must be >= 1");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);

  std::vector<real> out(size_t(i64(N) * C * out_h * out_w));
  const std::vector<real>& x = input.values();
  parallel_for(i64(N) * C, [&](i64 b, i64 e) {
    for (i64 nc = b; nc < e; ++nc) {
      const real* p = x.data() + nc * H * W;
      real* o = out.data() + nc * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        int y0, y1;
        real wy;
        lerp_axis(out_h, H, oy, y0, y1, wy);
        for (int ox = 0; ox < out_w; ++ox) {
          int x0, x1;
          real wx;
          lerp_axis(out_w, W, ox, x0, x1, wx);
          o[oy * out_w + ox] = (1 - wy) * ((1 - wx) * p[y0 * W + x0] + wx * p[y0 * W + x1]) +
                               wy * ((1 - wx) * p[y1 * W + x0] + wx * p[y1 * W + x1]);
        }
      }
    }
  });

  auto xi = input.impl();
  return make_op({N, C, out_h, out_w}, std::move(out), {input},
                 [xi, N, C, H, W, out_h, out_w](TensorImpl& self) {
                   if (!xi->requires_grad) return;
                   xi->ensure_grad();
                   parallel_for(i64(N) * C, [&](i64 b, i64 e) {
                     for (i64 nc = b; nc < e; ++nc) {
                       const real* go = self.g.data() + nc * out_h * out_w;
                       real* gx = xi->g.data() + nc * H * W;
                       for (int oy = 0; oy < out_h; ++oy) {
                         int y0, y1;
                         real wy;
                         lerp_axis(out_h, H, oy, y0, y1, wy);
                         for (int ox = 0; ox < out_w; ++ox) {
                           int x0, x1;
                           real wx;
                           lerp_axis(out_w, W, ox, x0, x1, wx);
                           const real g = go[oy * out_w + ox];
                           gx[y0 * W + x0] += (1 - wy) * (1 - wx) * g;
                           gx[y0 * W + x1] += (1 - wy) * wx * g;
                           gx[y1 * W + x0] += wy * (1 - wx) * g;
                           gx[y1 * W + x1] += wy * wx * g;
                         }
                       }
                     }
                   });
                 });
}

Tensor interp_trilinear3d(const Tensor& input, int out_d, int out_h, int out_w) {
  if (input.ndim() != 5) fail_shape("interp_trilinear3d input must be [N,C,D,H,W]");
  if (out_d < 1 || out_h < 1 || out_w < 1)
    fail_config("interpolation target extents must be >= 1");
  const int N = input.dim(0), C = input.dim(1), D = input.dim(2), H = input.dim(3),
            W = input.dim(4);

  std::vector<real> out(size_t(i64(N) * C * out_d * out_h * out_w));
  const std::vector<real>& x = input.values();
  parallel_for(i64(N) * C, [&](i64 b, i64 e) {
    for (i64 nc = b; nc < e; ++nc) {
      const real* p = x.data() + nc * D * H * W;
      real* o = out.data() + nc * i64(out_d) * out_h * out_w;
      for (int od = 0; od < out_d; ++od) {
        int z0, z1;
        real wz;
        lerp_axis(out_d, D, od, z0, z1, wz);
        for (int oy = 0; oy < out_h; ++oy) {
          int y0, y1;
          real wy;
          lerp_axis(out_h, H, oy, y0, y1, wy);
          for (int ox = 0; ox < out_w; ++ox) {
            int x0, x1;
            real wx;
            lerp_axis(out_w, W, ox, x0, x1, wx);
            auto at = [&](int z, int y, int xx) { return p[(i64(z) * H + y) * W + xx]; };
            const real v00 = (1 - wx) * at(z0, y0, x0) + wx * at(z0, y0, x1);
            const real v01 = (1 - wx) * at(z0, y1, x0) + wx * at(z0, y1, x1);
            const real v10 = (1 - wx) * at(z1, y0, x0) + wx * at(z1, y0, x1);
            const real v11 = (1 - wx) * at(z1, y1, x0) + wx * at(z1, y1, x1);
            o[(i64(od) * out_h + oy) * out_w + ox] =
                (1 - wz) * ((1 - wy) * v00 + wy * v01) + wz * ((1 - wy) * v10 + wy * v11);
          }
        }
      }
    }
  });

  auto xi = input.impl();
  return make_op(
      {N, C, out_d, out_h, out_w}, std::move(out), {input},
      [xi, N, C, D, H, W, out_d, out_h, out_w](TensorImpl& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        parallel_for(i64(N) * C, [&](i64 b, i64 e) {
          for (i64 nc = b; nc < e; ++nc) {
            const real* go = self.g.data() + nc * i64(out_d) * out_h * out_w;
            real* gx = xi->g.data() + nc * D * H * W;
            for (int od = 0; od < out_d; ++od) {
              int z0, z1;
              real wz;
              lerp_axis(out_d, D, od, z0, z1, wz);
              for (int oy = 0; oy < out_h; ++oy) {
                int y0, y1;
                real wy;
                lerp_axis(out_h, H, oy, y0, y1, wy);
                for (int ox = 0; ox < out_w; ++ox) {
                  int x0, x1;
                  real wx;
                  lerp_axis(out_w, W, ox, x0, x1, wx);
                  const real g = go[(i64(od) * out_h + oy) * out_w + ox];
                  auto sc = [&](int z, int y, int xx, real w) {
                    gx[(i64(z) * H + y) * W + xx] += w * g;
                  };
                  sc(z0, y0, x0, (1 - wz) * (1 - wy) * (1 - wx));
                  sc(z0, y0, x1, (1 - wz) * (1 - wy) * wx);
                  sc(z0, y1, x0, (1 - wz) * wy * (1 - wx));
                  sc(z0, y1, x1, (1 - wz) * wy * wx);
                  sc(z1, y0, x0, wz * (1 - wy) * (1 - wx));
                  sc(z1, y0, x1, wz * (1 - wy) * wx);
                  sc(z1, y1, x0, wz * wy * (1 - wx));
                  sc(z1, y1, x1, wz * wy * wx);
                }
              }
            }
          }
        });
      });
}

}  // namespace stereo
