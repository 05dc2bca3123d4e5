#include <algorithm>
#include <cmath>

#include "stereo/nn.hpp"

namespace stereo {

namespace {

bool g_mac_on = false;
MacCount g_macs;

// Valid index range [lo,hi] for j such that j*s - p + k*dl lands in
// [0, mapped_extent) and j stays in [0, index_extent).
inline void span(int s, int p, int dl, int k, int mapped_extent, int index_extent,
                 int& lo, int& hi) {
  const int num = p - k * dl;
  lo = num > 0 ? (num + s - 1) / s : 0;
  const int hn = mapped_extent - 1 + p - k * dl;
  hi = hn < 0 ? -1 : std::min(index_extent - 1, hn / s);
}

struct Dims3 {
  int N, Ci, Di, Hi, Wi;
  int Co, Do, Ho, Wo;
  int KD, KH, KW;
  int sd, sh, sw, pd, ph, pw, dd, dh, dw;
};

void forward_normal(const real* in, const real* w, const real* bias, real* out,
                    const Dims3& d) {
  const i64 rows = i64(d.N) * d.Co * d.Do * d.Ho;
  parallel_for(rows, [&](i64 b, i64 e) {
    for (i64 r = b; r < e; ++r) {
      int oh = int(r % d.Ho);
      i64 t = r / d.Ho;
      int od = int(t % d.Do);
      t /= d.Do;
      int co = int(t % d.Co);
      int n = int(t / d.Co);
      real* orow = out + r * d.Wo;
      const real bv = bias ? bias[co] : real(0);
      for (int ox = 0; ox < d.Wo; ++ox) orow[ox] = bv;
      for (int ci = 0; ci < d.Ci; ++ci) {
        for (int kd = 0; kd < d.KD; ++kd) {
          const int id = od * d.sd - d.pd + kd * d.dd;
          if (id < 0 || id >= d.Di) continue;
          for (int ky = 0; ky < d.KH; ++ky) {
            const int iy = oh * d.sh - d.ph + ky * d.dh;
            if (iy < 0 || iy >= d.Hi) continue;
            const real* irow =
                in + (((i64(n) * d.Ci + ci) * d.Di + id) * d.Hi + iy) * d.Wi;
            const real* wrow =
                w + (((i64(co) * d.Ci + ci) * d.KD + kd) * d.KH + ky) * d.KW;
            for (int kx = 0; kx < d.KW; ++kx) {
              const real wv = wrow[kx];
              if (wv == 0) continue;
              int lo, hi;
              span(d.sw, d.pw, d.dw, kx, d.Wi, d.Wo, lo, hi);
              const int base = -d.pw + kx * d.dw;
              for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * d.sw + base];
            }
          }
        }
      }
    }
  });
}

void backward_input_normal(const real* gout, const real* w, real* gin, const Dims3& d) {
  const i64 rows = i64(d.N) * d.Ci * d.Di * d.Hi;
  parallel_for(rows, [&](i64 b, i64 e) {
    for (i64 r = b; r < e; ++r) {
      int iy = int(r % d.Hi);
      i64 t = r / d.Hi;
      int id = int(t % d.Di);
      t /= d.Di;
      int ci = int(t % d.Ci);
      int n = int(t / d.Ci);
      real* grow = gin + r * d.Wi;
      for (int co = 0; co < d.Co; ++co) {
        for (int kd = 0; kd < d.KD; ++kd) {
          const int td = id + d.pd - kd * d.dd;
          if (td < 0 || td % d.sd) continue;
          const int od = td / d.sd;
          if (od >= d.Do) continue;
          for (int ky = 0; ky < d.KH; ++ky) {
            const int th = iy + d.ph - ky * d.dh;
            if (th < 0 || th % d.sh) continue;
            const int oh = th / d.sh;
            if (oh >= d.Ho) continue;
            const real* grout =
                gout + (((i64(n) * d.Co + co) * d.Do + od) * d.Ho + oh) * d.Wo;
            const real* wrow =
                w + (((i64(co) * d.Ci + ci) * d.KD + kd) * d.KH + ky) * d.KW;
            for (int kx = 0; kx < d.KW; ++kx) {
              const real wv = wrow[kx];
              if (wv == 0) continue;
              int lo, hi;
              span(d.sw, d.pw, d.dw, kx, d.Wi, d.Wo, lo, hi);
              const int base = -d.pw + kx * d.dw;
              for (int ox = lo; ox <= hi; ++ox) grow[ox * d.sw + base] += wv * grout[ox];
            }
          }
        }
      }
    }
  });
}

void backward_weight_normal(const real* in, const real* gout, real* gw, const Dims3& d) {
  parallel_for(i64(d.Co) * d.Ci, [&](i64 b, i64 e) {
    for (i64 cc = b; cc < e; ++cc) {
      const int co = int(cc / d.Ci);
      const int ci = int(cc % d.Ci);
      for (int kd = 0; kd < d.KD; ++kd)
        for (int ky = 0; ky < d.KH; ++ky)
          for (int kx = 0; kx < d.KW; ++kx) {
            real acc = 0;
            int lo, hi;
            span(d.sw, d.pw, d.dw, kx, d.Wi, d.Wo, lo, hi);
            const int base = -d.pw + kx * d.dw;
            for (int n = 0; n < d.N; ++n)
              for (int od = 0; od < d.Do; ++od) {
                const int id = od * d.sd - d.pd + kd * d.dd;
                if (id < 0 || id >= d.Di) continue;
                for (int oh = 0; oh < d.Ho; ++oh) {
                  const int iy = oh * d.sh - d.ph + ky * d.dh;
                  if (iy < 0 || iy >= d.Hi) continue;
                  const real* irow =
                      in + (((i64(n) * d.Ci + ci) * d.Di + id) * d.Hi + iy) * d.Wi;
                  const real* grout =
                      gout + (((i64(n) * d.Co + co) * d.Do + od) * d.Ho + oh) * d.Wo;
                  for (int ox = lo; ox <= hi; ++ox)
                    acc += grout[ox] * irow[ox * d.sw + base];
                }
              }
            gw[(((i64(co) * d.Ci + ci) * d.KD + kd) * d.KH + ky) * d.KW + kx] += acc;
          }
    }
  });
}

void forward_transposed(const real* in, const real* w, const real* bias, real* out,
                        const Dims3& d) {
  const i64 rows = i64(d.N) * d.Co * d.Do * d.Ho;
  parallel_for(rows, [&](i64 b, i64 e) {
    for (i64 r = b; r < e; ++r) {
      int oh = int(r % d.Ho);
      i64 t = r / d.Ho;
      int od = int(t % d.Do);
      t /= d.Do;
      int co = int(t % d.Co);
      int n = int(t / d.Co);
      real* orow = out + r * d.Wo;
      const real bv = bias ? bias[co] : real(0);
      for (int ox = 0; ox < d.Wo; ++ox) orow[ox] = bv;
      for (int ci = 0; ci < d.Ci; ++ci) {
        for (int kd = 0; kd < d.KD; ++kd) {
          const int td = od + d.pd - kd * d.dd;
          if (td < 0 || td % d.sd) continue;
          const int id = td / d.sd;
          if (id >= d.Di) continue;
          for (int ky = 0; ky < d.KH; ++ky) {
            const int th = oh + d.ph - ky * d.dh;
            if (th < 0 || th % d.sh) continue;
            const int iy = th / d.sh;
            if (iy >= d.Hi) continue;
            const real* irow =
                in + (((i64(n) * d.Ci + ci) * d.Di + id) * d.Hi + iy) * d.Wi;
            const real* wrow =
                w + (((i64(ci) * d.Co + co) * d.KD + kd) * d.KH + ky) * d.KW;
            for (int kx = 0; kx < d.KW; ++kx) {
              const real wv = wrow[kx];
              if (wv == 0) continue;
              int lo, hi;
              span(d.sw, d.pw, d.dw, kx, d.Wo, d.Wi, lo, hi);
              const int base = -d.pw + kx * d.dw;
              for (int ix = lo; ix <= hi; ++ix) orow[ix * d.sw + base] += wv * irow[ix];
            }
          }
        }
      }
    }
  });
}

void backward_input_transposed(const real* gout, const real* w, real* gin,
                               const Dims3& d) {
  const i64 rows = i64(d.N) * d.Ci * d.Di * d.Hi;
  parallel_for(rows, [&](i64 b, i64 e) {
    for (i64 r = b; r < e; ++r) {
      int iy = int(r % d.Hi);
      i64 t = r / d.Hi;
      int id = int(t % d.Di);
      t /= d.Di;
      int ci = int(t % d.Ci);
      int n = int(t / d.Ci);
      real* grow = gin + r * d.Wi;
      for (int co = 0; co < d.Co; ++co) {
        for (int kd = 0; kd < d.KD; ++kd) {
          const int od = id * d.sd - d.pd + kd * d.dd;
          if (od < 0 || od >= d.Do) continue;
          for (int ky = 0; ky < d.KH; ++ky) {
            const int oh = iy * d.sh - d.ph + ky * d.dh;
            if (oh < 0 || oh >= d.Ho) continue;
            const real* grout =
                gout + (((i64(n) * d.Co + co) * d.Do + od) * d.Ho + oh) * d.Wo;
            const real* wrow =
                w + (((i64(ci) * d.Co + co) * d.KD + kd) * d.KH + ky) * d.KW;
            for (int kx = 0; kx < d.KW; ++kx) {
              const real wv = wrow[kx];
              if (wv == 0) continue;
              int lo, hi;
              span(d.sw, d.pw, d.dw, kx, d.Wo, d.Wi, lo, hi);
              const int base = -d.pw + kx * d.dw;
              for (int ix = lo; ix <= hi; ++ix) grow[ix] += wv * grout[ix * d.sw + base];
            }
          }
        }
      }
    }
  });
}

void backward_weight_transposed(const real* in, const real* gout, real* gw,
                                const Dims3& d) {
  parallel_for(i64(d.Ci) * d.Co, [&](i64 b, i64 e) {
    for (i64 cc = b; cc < e; ++cc) {
      const int ci = int(cc / d.Co);
      const int co = int(cc % d.Co);
      for (int kd = 0; kd < d.KD; ++kd)
        for (int ky = 0; ky < d.KH; ++ky)
          for (int kx = 0; kx < d.KW; ++kx) {
            real acc = 0;
            int lo, hi;
            span(d.sw, d.pw, d.dw, kx, d.Wo, d.Wi, lo, hi);
            const int base = -d.pw + kx * d.dw;
            for (int n = 0; n < d.N; ++n)
              for (int id = 0; id < d.Di; ++id) {
                const int od = id * d.sd - d.pd + kd * d.dd;
                if (od < 0 || od >= d.Do) continue;
                for (int iy = 0; iy < d.Hi; ++iy) {
                  const int oh = iy * d.sh - d.ph + ky * d.dh;
                  if (oh < 0 || oh >= d.Ho) continue;
                  const real* irow =
                      in + (((i64(n) * d.Ci + ci) * d.Di + id) * d.Hi + iy) * d.Wi;
                  const real* grout =
                      gout + (((i64(n) * d.Co + co) * d.Do + od) * d.Ho + oh) * d.Wo;
                  for (int ix = lo; ix <= hi; ++ix)
                    acc += irow[ix] * grout[ix * d.sw + base];
                }
              }
            gw[(((i64(ci) * d.Co + co) * d.KD + kd) * d.KH + ky) * d.KW + kx] += acc;
          }
    }
  });
}

void backward_bias(const real* gout, real* gb, int N, int Co, i64 spatial) {
  parallel_for(Co, [&](i64 b, i64 e) {
    for (i64 co = b; co < e; ++co) {
      real acc = 0;
      for (int n = 0; n < N; ++n)
        acc += pairwise_sum(gout + (i64(n) * Co + co) * spatial, spatial);
      gb[co] += acc;
    }
  });
}

}  // namespace

void ConvSpec::validate() const {
  const int r = rank();
  if (r != 2 && r != 3) fail_config("conv rank must be 2 or 3");
  auto chk = [&](const std::vector<int>& v, const char* name, int lo) {
    if (static_cast<int>(v.size()) != r)
      fail_config(std::string("conv ") + name + " must have one entry per spatial axis");
    for (int x : v)
      if (x < lo) fail_config(std::string("conv ") + name + " out of range");
  };
  chk(kernel, "kernel", 1);
  chk(stride, "stride", 1);
  chk(dilation, "dilation", 1);
  chk(padding, "padding", 0);
  if (transposed) {
    chk(output_padding, "output_padding", 0);
    for (int i = 0; i < r; ++i)
      if (output_padding[size_t(i)] >= stride[size_t(i)])
        fail_config("output_padding must be < stride");
  }
  if (in_channels < 1 || out_channels < 1) fail_config("conv channel counts must be >= 1");
}

std::vector<int> ConvSpec::weight_shape() const {
  std::vector<int> s = transposed ? std::vector<int>{in_channels, out_channels}
                                  : std::vector<int>{out_channels, in_channels};
  s.insert(s.end(), kernel.begin(), kernel.end());
  return s;
}

std::vector<int> ConvSpec::out_extents(const std::vector<int>& in_extents) const {
  if (static_cast<int>(in_extents.size()) != rank())
    fail_shape("conv input rank mismatch");
  std::vector<int> out(in_extents.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const int in = in_extents[i], k = kernel[i], s = stride[i], p = padding[i],
              dl = dilation[i];
    if (transposed) {
      out[i] = (in - 1) * s - 2 * p + dl * (k - 1) + 1 + output_padding[i];
    } else {
      const int num = in + 2 * p - dl * (k - 1) - 1;
      out[i] = num < 0 ? 0 : num / s + 1;
    }
    if (out[i] < 1)
      fail_config("conv produces zero-size spatial output on axis " + std::to_string(i));
  }
  return out;
}

ConvSpec ConvSpec::same2d(int cin, int cout, int k, int stride, int dilation) {
  ConvSpec s;
  s.kernel = {k, k};
  s.stride = {stride, stride};
  s.dilation = {dilation, dilation};
  s.padding = {dilation * (k - 1) / 2, dilation * (k - 1) / 2};
  s.in_channels = cin;
  s.out_channels = cout;
  return s;
}

ConvSpec ConvSpec::same3d(int cin, int cout, int k, int stride, int dilation) {
  ConvSpec s;
  const int p = dilation * (k - 1) / 2;
  s.kernel = {k, k, k};
  s.stride = {stride, stride, stride};
  s.dilation = {dilation, dilation, dilation};
  s.padding = {p, p, p};
  s.in_channels = cin;
  s.out_channels = cout;
  return s;
}

ConvSpec ConvSpec::up3d(int cin, int cout, int k, int stride) {
  ConvSpec s;
  const int p = (k - 1) / 2;
  s.kernel = {k, k, k};
  s.stride = {stride, stride, stride};
  s.dilation = {1, 1, 1};
  s.padding = {p, p, p};
  s.output_padding = {stride - 1, stride - 1, stride - 1};
  s.in_channels = cin;
  s.out_channels = cout;
  s.transposed = true;
  return s;
}

i64 conv_macs(const ConvSpec& spec, const std::vector<int>& in_extents) {
  i64 kp = 1;
  for (int k : spec.kernel) kp *= k;
  if (spec.transposed) {
    i64 n = 1;
    for (int e : in_extents) n *= e;
    return n * spec.out_channels * spec.in_channels * kp;
  }
  i64 n = 1;
  for (int e : spec.out_extents(in_extents)) n *= e;
  return n * spec.out_channels * spec.in_channels * kp;
}

void mac_counter_enable(bool on) { g_mac_on = on; }
void mac_counter_reset() { g_macs = MacCount{}; }
MacCount mac_counter() { return g_macs; }

namespace detail {

Tensor conv_nd3(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                const Tensor& bias, bool count_as_2d) {
  spec.validate();
  if (spec.rank() != 3) fail_config("conv_nd3 requires a rank-3 spec");
  if (input.ndim() != 5)
    fail_shape("conv3d input must be [N,C,D,H,W], got " + shape_str(input.shape()));
  if (input.dim(1) != spec.in_channels)
    fail_shape("conv3d input channels " + std::to_string(input.dim(1)) +
               " != spec in_channels " + std::to_string(spec.in_channels));
  if (weights.shape() != spec.weight_shape())
    fail_shape("conv3d weight shape " + shape_str(weights.shape()) + " != expected " +
               shape_str(spec.weight_shape()));
  if (bias.defined() && bias.shape() != std::vector<int>{spec.out_channels})
    fail_shape("conv3d bias shape mismatch");

  const std::vector<int> in_sp{input.dim(2), input.dim(3), input.dim(4)};
  const std::vector<int> out_sp = spec.out_extents(in_sp);

  Dims3 d;
  d.N = input.dim(0);
  d.Ci = spec.in_channels;
  d.Di = in_sp[0];
  d.Hi = in_sp[1];
  d.Wi = in_sp[2];
  d.Co = spec.out_channels;
  d.Do = out_sp[0];
  d.Ho = out_sp[1];
  d.Wo = out_sp[2];
  d.KD = spec.kernel[0];
  d.KH = spec.kernel[1];
  d.KW = spec.kernel[2];
  d.sd = spec.stride[0];
  d.sh = spec.stride[1];
  d.sw = spec.stride[2];
  d.pd = spec.padding[0];
  d.ph = spec.padding[1];
  d.pw = spec.padding[2];
  d.dd = spec.dilation[0];
  d.dh = spec.dilation[1];
  d.dw = spec.dilation[2];

  if (g_mac_on) {
    const i64 m = conv_macs(spec, in_sp);
    if (count_as_2d)
      g_macs.conv2d += m;
    else
      g_macs.conv3d += m;
  }

  std::vector<real> out(size_t(i64(d.N) * d.Co * d.Do * d.Ho * d.Wo));
  const real* bp = bias.defined() ? bias.values().data() : nullptr;
  if (spec.transposed)
    forward_transposed(input.values().data(), weights.values().data(), bp, out.data(), d);
  else
    forward_normal(input.values().data(), weights.values().data(), bp, out.data(), d);

  auto ii = input.impl();
  auto wi = weights.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor> parents{input, weights};
  if (bias.defined()) parents.push_back(bias);
  const bool transposed = spec.transposed;

  return make_op({d.N, d.Co, d.Do, d.Ho, d.Wo}, std::move(out), parents,
                 [ii, wi, bi, d, transposed](TensorImpl& self) {
                   if (ii->requires_grad) {
                     ii->ensure_grad();
                     if (transposed)
                       backward_input_transposed(self.g.data(), wi->v.data(), ii->g.data(), d);
                     else
                       backward_input_normal(self.g.data(), wi->v.data(), ii->g.data(), d);
                   }
                   if (wi->requires_grad) {
                     wi->ensure_grad();
                     if (transposed)
                       backward_weight_transposed(ii->v.data(), self.g.data(), wi->g.data(), d);
                     else
                       backward_weight_normal(ii->v.data(), self.g.data(), wi->g.data(), d);
                   }
                   if (bi && bi->requires_grad) {
                     bi->ensure_grad();
                     backward_bias(self.g.data(), bi->g.data(), d.N, d.Co,
                                   i64(d.Do) * d.Ho * d.Wo);
                   }
                 });
}

}  // namespace detail

Tensor conv3d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias) {
  return detail::conv_nd3(input, spec, weights, bias, /*count_as_2d=*/false);
}

}  // namespace stereo
