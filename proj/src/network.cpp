#include "stereo/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

namespace stereo {

void NetworkConfig::validate() const {
  if (feature_width < 2 || feature_width % 2 != 0)
    fail_config("feature width must be an even number >= 2");
  if (max_disparity < 8 || max_disparity % 8 != 0)
    fail_config("max disparity must be a positive multiple of 8");
  if (stages < 1) fail_config("need at least one filtering stage");
  for (int r : repeats)
    if (r < 1) fail_config("residual group repeats must be >= 1");
  if (pool_grids.size() != pool_rates.size() || pool_grids.empty())
    fail_config("pooling grids and rates must pair up");
  for (int g : pool_grids)
    if (g < 1) fail_config("pooling grid must be >= 1");
  if (filter_dilations.empty()) fail_config("need at least one filter dilation");
  if (refine_dilations.empty()) fail_config("need at least one refinement dilation");
}

NetworkConfig NetworkConfig::toy() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::paper_size() {
  NetworkConfig c;
  c.feature_width = 32;
  c.repeats = {3, 15, 6};
  c.max_disparity = 192;
  return c;
}

namespace {

struct ConvLayer {
  ConvSpec spec;
  Tensor w;
  Tensor bias;  // only when bn is off
  bool bn = true;
  bool relu = true;
  Tensor gamma, beta;
  BatchNormStats stats;
};

struct ResBlock {
  ConvLayer* c1 = nullptr;
  ConvLayer* c2 = nullptr;
  int cin = 0, cout = 0;
};

struct FilterStage {
  ConvLayer* down = nullptr;   // stride-2 bottleneck entry
  ConvLayer* carry = nullptr;  // feeds the next stage's residual chain
  std::vector<ConvLayer*> dil;
  ConvLayer* merge = nullptr;
  ConvLayer* up = nullptr;     // stride-2 transposed conv
  ConvLayer* pred = nullptr;   // zero-initialized 2-channel output
};

Tensor detach(const Tensor& t) { return Tensor::from(t.shape(), t.values()); }

}  // namespace

struct DilatedStereoNet::Impl {
  NetworkConfig cfg;
  std::deque<ConvLayer> store;
  std::vector<Tensor> params;
  std::vector<std::string> names;
  Rng rng{0};

  std::vector<ConvLayer*> pre;        // rows 2-4
  std::vector<ResBlock> group1, group2, group3;
  ConvLayer* down = nullptr;          // row 8
  std::vector<ConvLayer*> branches;   // spatial pooling branch convs
  ConvLayer* pool_merge = nullptr;    // row 34
  ConvLayer* pool_out = nullptr;      // row 35, 1x1 no BN/ReLU
  ConvLayer* cost_pre1 = nullptr;     // row 37
  ConvLayer* cost_pre2 = nullptr;     // row 38
  std::vector<FilterStage> stages;
  ConvLayer* ref_img = nullptr;       // refinement branch convs
  ConvLayer* ref_disp = nullptr;
  std::vector<ResBlock> ref_blocks;
  ConvLayer* ref_out = nullptr;

  Tensor he(const std::vector<int>& shape, i64 fan_in) {
    Tensor t = Tensor::zeros(shape, true);
    const real std = std::sqrt(real(2) / real(fan_in));
    for (auto& v : t.values()) v = rng.normal(0, std);
    return t;
  }

  void reg(const std::string& n, Tensor t) {
    params.push_back(std::move(t));
    names.push_back(n);
  }

  ConvLayer* make(const std::string& name, ConvSpec spec, bool bn, bool relu_on,
                  bool zero_init) {
    store.emplace_back();
    ConvLayer& l = store.back();
    l.spec = spec;
    l.bn = bn;
    l.relu = relu_on;
    i64 fan = spec.in_channels;
    for (int k : spec.kernel) fan *= k;
    l.w = zero_init ? Tensor::zeros(spec.weight_shape(), true)
                    : he(spec.weight_shape(), fan);
    reg(name + ".w", l.w);
    if (bn) {
      l.gamma = Tensor::full({spec.out_channels}, 1, true);
      l.beta = Tensor::zeros({spec.out_channels}, true);
      reg(name + ".bn_g", l.gamma);
      reg(name + ".bn_b", l.beta);
    } else {
      l.bias = Tensor::zeros({spec.out_channels}, true);
      reg(name + ".b", l.bias);
    }
    return &l;
  }

  ConvLayer* conv2(const std::string& n, int ci, int co, int k, int s, int d,
                   bool bn = true, bool act = true, bool zero = false) {
    return make(n, ConvSpec::same2d(ci, co, k, s, d), bn, act, zero);
  }
  ConvLayer* conv3(const std::string& n, int ci, int co, int k, int s, int d,
                   bool bn = true, bool act = true, bool zero = false) {
    return make(n, ConvSpec::same3d(ci, co, k, s, d), bn, act, zero);
  }

  ResBlock block2(const std::string& n, int ci, int co, int d) {
    ResBlock b;
    b.cin = ci;
    b.cout = co;
    b.c1 = conv2(n + ".a", ci, co, 3, 1, d);
    b.c2 = conv2(n + ".b", co, co, 3, 1, d, true, /*act=*/false);
    return b;
  }

  Tensor apply(ConvLayer* l, const Tensor& x, BnMode mode) {
    Tensor y = l->spec.rank() == 2 ? conv2d(x, l->spec, l->w, l->bias)
                                   : conv3d(x, l->spec, l->w, l->bias);
    if (l->bn) y = batch_norm(y, l->gamma, l->beta, l->stats, mode);
    if (l->relu) y = relu(y);
    return y;
  }

  // channel-padded identity skip keeps the table's layer count when a group
  // changes width
  static Tensor pad_channels(const Tensor& x, int cout) {
    const int cin = x.dim(1);
    if (cin == cout) return x;
    std::vector<int> zshape = x.shape();
    zshape[1] = cout - cin;
    return concat({x, Tensor::zeros(zshape)}, 1);
  }

  Tensor res(const ResBlock& b, const Tensor& x, BnMode mode) {
    Tensor h = apply(b.c2, apply(b.c1, x, mode), mode);
    return relu(add(h, pad_channels(x, b.cout)));
  }

  void build() {
    cfg.validate();
    const int F = cfg.feature_width;
    pre.push_back(conv2("feat.pre0", 3, F, 3, 2, 1));
    pre.push_back(conv2("feat.pre1", F, F, 3, 1, 1));
    pre.push_back(conv2("feat.pre2", F, F, 3, 1, 1));
    for (int i = 0; i < cfg.repeats[0]; ++i)
      group1.push_back(block2("feat.g1." + std::to_string(i), F, F, 1));
    down = conv2("feat.down", F, F, 3, 2, 1);
    for (int i = 0; i < cfg.repeats[1]; ++i)
      group2.push_back(block2("feat.g2." + std::to_string(i), i == 0 ? F : 2 * F, 2 * F, 1));
    for (int i = 0; i < cfg.repeats[2]; ++i)
      group3.push_back(block2("feat.g3." + std::to_string(i), i == 0 ? 2 * F : 4 * F, 4 * F, 1));
    for (size_t i = 0; i < cfg.pool_grids.size(); ++i) {
      if (cfg.pyramid_pooling)
        branches.push_back(conv2("pool.br" + std::to_string(i), 4 * F, 4 * F, 1, 1, 1));
      else
        branches.push_back(conv2("pool.br" + std::to_string(i), 4 * F, 4 * F, 3, 1,
                                 cfg.pool_rates[i]));
    }
    const int cat_ch = 2 * F + 4 * F + 4 * F + static_cast<int>(branches.size()) * 4 * F;
    pool_merge = conv2("pool.merge", cat_ch, 4 * F, 3, 1, 1);
    pool_out = conv2("pool.out", 4 * F, F, 1, 1, 1, /*bn=*/false, /*act=*/false);

    // the filtering trunk keeps the cost volume's full 2F width; the published
    // MAC budget (3D convolutions dominating the total) only adds up at this
    // width, not at F
    const int Fc = 2 * F;
    cost_pre1 = conv3("filt.pre0", Fc, Fc, 3, 1, 1);
    cost_pre2 = conv3("filt.pre1", Fc, Fc, 3, 1, 1);
    for (int k = 0; k < cfg.stages; ++k) {
      FilterStage st;
      const std::string p = "filt.s" + std::to_string(k);
      st.down = conv3(p + ".down", Fc, Fc, 3, 2, 1);
      st.carry = conv3(p + ".carry", Fc, Fc, 3, 1, 1);
      for (size_t i = 0; i < cfg.filter_dilations.size(); ++i)
        st.dil.push_back(conv3(p + ".dil" + std::to_string(i), Fc, Fc, 3, 1,
                               cfg.filter_dilations[i]));
      st.merge = conv3(p + ".merge", static_cast<int>(st.dil.size()) * Fc, Fc, 3, 1, 1);
      st.up = make(p + ".up", ConvSpec::up3d(Fc, Fc, 3, 2), true, true, false);
      st.pred = conv3(p + ".pred", Fc, 2, 3, 1, 1, /*bn=*/false, /*act=*/false,
                      /*zero=*/true);
      stages.push_back(st);
    }

    if (cfg.refinement) {
      const int ci_img = cfg.use_photometric ? 6 : 3;
      const int ci_disp = cfg.use_geometric ? 2 : 1;
      ref_img = conv2("ref.img", ci_img, F / 2, 3, 1, 1);
      ref_disp = conv2("ref.disp", ci_disp, F / 2, 3, 1, 1);
      for (size_t i = 0; i < cfg.refine_dilations.size(); ++i)
        ref_blocks.push_back(block2("ref.b" + std::to_string(i), F, F,
                                    cfg.refine_dilations[i]));
      ref_out = conv2("ref.out", F, 2, 3, 1, 1, /*bn=*/false, /*act=*/false,
                      /*zero=*/true);
    }
  }

  Tensor features(const Tensor& image, BnMode mode) {
    if (image.ndim() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
      fail_shape("features expect a [1,3,H,W] image");
    const int H = image.dim(2), W = image.dim(3);
    if (H % 4 != 0 || W % 4 != 0) fail_config("image extents must be divisible by 4");
    Tensor x = image;
    for (auto* l : pre) x = apply(l, x, mode);
    for (auto& b : group1) x = res(b, x, mode);
    x = apply(down, x, mode);
    for (auto& b : group2) x = res(b, x, mode);
    Tensor g2 = x;
    for (auto& b : group3) x = res(b, x, mode);
    const int H4 = H / 4, W4 = W / 4;
    std::vector<Tensor> parts = {g2, x, interp_bilinear2d(pool_global_avg(x), H4, W4)};
    for (size_t i = 0; i < branches.size(); ++i) {
      // grids sized for full frames shrink to fit small feature maps
      const int g = std::min(cfg.pool_grids[i], std::min(H4, W4));
      Tensor p = pool_avg_grid(x, g);
      p = apply(branches[i], p, mode);
      parts.push_back(interp_bilinear2d(p, H4, W4));
    }
    Tensor m = apply(pool_merge, concat(parts, 1), mode);
    return apply(pool_out, m, mode);
  }

  std::vector<Tensor> cost_filter(const Tensor& cost, BnMode mode) {
    if (cost.ndim() != 5 || cost.dim(1) != 2 * cfg.feature_width)
      fail_shape("cost filter expects [1,2F,D/4,H/4,W/4]");
    Tensor skip = apply(cost_pre2, apply(cost_pre1, cost, mode), mode);
    std::vector<Tensor> preds;
    Tensor u = skip, carry;
    for (size_t k = 0; k < stages.size(); ++k) {
      FilterStage& st = stages[k];
      Tensor d = apply(st.down, u, mode);
      Tensor c = apply(st.carry, d, mode);
      Tensor base;
      if (k == 0) {
        carry = c;
        base = d;
      } else {
        carry = add(c, carry);
        base = carry;
      }
      std::vector<Tensor> taps;
      for (auto* l : st.dil) taps.push_back(apply(l, base, mode));
      Tensor m = apply(st.merge, concat(taps, 1), mode);
      u = apply(st.up, m, mode);
      preds.push_back(apply(st.pred, add(u, skip), mode));
    }
    return preds;
  }

  std::pair<Tensor, Tensor> refinement_head(const Tensor& image, const Tensor& disp,
                                            const Tensor& e_p, const Tensor& e_g,
                                            BnMode mode) {
    if (!cfg.refinement) fail_state("refinement is disabled in this configuration");
    if (image.ndim() != 4 || disp.ndim() != 2)
      fail_shape("refinement expects image [1,3,H,W] and disparity [H,W]");
    const int H = disp.dim(0), W = disp.dim(1);
    if (cfg.use_photometric && !e_p.defined())
      fail_state("refinement configured with a photometric input but none given");
    if (cfg.use_geometric && !e_g.defined())
      fail_state("refinement configured with a geometric input but none given");
    Tensor d4 = reshape(disp, {1, 1, H, W});
    Tensor in_img = cfg.use_photometric
                        ? concat({reshape(e_p, {1, 3, H, W}), image}, 1)
                        : image;
    Tensor in_disp = cfg.use_geometric
                         ? concat({reshape(e_g, {1, 1, H, W}), d4}, 1)
                         : d4;
    Tensor h = concat({apply(ref_img, in_img, mode), apply(ref_disp, in_disp, mode)}, 1);
    for (auto& b : ref_blocks) h = res(b, h, mode);
    Tensor out = apply(ref_out, h, mode);
    Tensor r = reshape(narrow(out, 1, 0, 1), {H, W});
    Tensor o = reshape(narrow(out, 1, 1, 1), {H, W});
    // clamp D_l + R into [0, D-1] without losing in-range gradients
    const real M = real(cfg.max_disparity - 1);
    Tensor dref = relu(add(disp, r));
    dref = add_scalar(scale(relu(add_scalar(scale(dref, -1), M)), -1), M);
    return {dref, sigmoid(o)};
  }

  ModelOutput forward(const Tensor& left, const Tensor& right, BnMode mode) {
    if (left.ndim() != 4 || right.ndim() != 4 || !same_shape(left, right))
      fail_shape("forward expects matching [1,3,H,W] stereo images");
    const int H = left.dim(2), W = left.dim(3);
    if (H % 8 != 0 || W % 8 != 0) fail_config("input extents must be divisible by 8");
    Tensor fl = features(left, mode);
    Tensor fr = features(right, mode);
    auto [cvl, cvr] = build_cost_volume(fl, fr, cfg.max_disparity);
    std::vector<Tensor> preds = cost_filter(concat({cvl.vol, cvr.vol}, 1), mode);

    ModelOutput out;
    const int D = cfg.max_disparity;
    for (Tensor& p : preds) {
      Tensor up = interp_trilinear3d(p, D, H, W);
      Tensor cl = reshape(narrow(up, 1, 0, 1), {D, H, W});
      Tensor cr = reshape(narrow(up, 1, 1, 1), {D, H, W});
      DisparityField dl = soft_argmax_disparity(cl);
      DisparityField dr = soft_argmax_disparity(cr);
      dl.view = View::kLeft;
      dr.view = View::kRight;
      out.disp_left.push_back(std::move(dl));
      out.disp_right.push_back(std::move(dr));
    }
    if (cfg.refinement) {
      Tensor dl = out.disp_left.back().disp;
      Tensor dr = out.disp_right.back().disp;
      if (cfg.stop_gradient_refinement) {
        dl = detach(dl);
        dr = detach(dr);
      }
      Tensor il = reshape(left, {3, H, W});
      Tensor ir = reshape(right, {3, H, W});
      ConsistencyMaps cm = consistency_maps(il, ir, DisparityField::dense(dl, View::kLeft),
                                            DisparityField::dense(dr, View::kRight));
      out.e_p = cm.e_p;
      out.e_g = cm.e_g;
      auto [dref, occ] = refinement_head(left, dl, cm.e_p, cm.e_g, mode);
      out.refined = DisparityField::dense(dref, View::kLeft);
      out.occlusion = OcclusionMap{occ};
    }
    return out;
  }

  MacCount count_macs(int H, int W) const {
    MacCount m;
    auto add2 = [&m](const ConvSpec& s, std::vector<int> in, i64 times = 1) {
      m.conv2d += conv_macs(s, in) * times;
    };
    auto add3 = [&m](const ConvSpec& s, std::vector<int> in) {
      m.conv3d += conv_macs(s, in);
    };
    const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
    // features run once per view
    add2(pre[0]->spec, {H, W}, 2);
    add2(pre[1]->spec, {H2, W2}, 2);
    add2(pre[2]->spec, {H2, W2}, 2);
    for (const auto& b : group1) {
      add2(b.c1->spec, {H2, W2}, 2);
      add2(b.c2->spec, {H2, W2}, 2);
    }
    add2(down->spec, {H2, W2}, 2);
    for (const auto& b : group2) {
      add2(b.c1->spec, {H4, W4}, 2);
      add2(b.c2->spec, {H4, W4}, 2);
    }
    for (const auto& b : group3) {
      add2(b.c1->spec, {H4, W4}, 2);
      add2(b.c2->spec, {H4, W4}, 2);
    }
    for (size_t i = 0; i < branches.size(); ++i) {
      const int g = std::min(cfg.pool_grids[i], std::min(H4, W4));
      add2(branches[i]->spec, {(H4 + g - 1) / g, (W4 + g - 1) / g}, 2);
    }
    add2(pool_merge->spec, {H4, W4}, 2);
    add2(pool_out->spec, {H4, W4}, 2);

    const int L = cfg.max_disparity / 4, L2 = L / 2, H8 = H / 8, W8 = W / 8;
    add3(cost_pre1->spec, {L, H4, W4});
    add3(cost_pre2->spec, {L, H4, W4});
    for (const auto& st : stages) {
      add3(st.down->spec, {L, H4, W4});
      add3(st.carry->spec, {L2, H8, W8});
      for (auto* l : st.dil) add3(l->spec, {L2, H8, W8});
      add3(st.merge->spec, {L2, H8, W8});
      add3(st.up->spec, {L2, H8, W8});
      add3(st.pred->spec, {L, H4, W4});
    }
    if (cfg.refinement) {
      add2(ref_img->spec, {H, W});
      add2(ref_disp->spec, {H, W});
      for (const auto& b : ref_blocks) {
        add2(b.c1->spec, {H, W});
        add2(b.c2->spec, {H, W});
      }
      add2(ref_out->spec, {H, W});
    }
    return m;
  }
};

DilatedStereoNet::DilatedStereoNet(const NetworkConfig& cfg, std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  impl_->cfg = cfg;
  impl_->rng = Rng(seed);
  impl_->build();
}

DilatedStereoNet::~DilatedStereoNet() = default;
DilatedStereoNet::DilatedStereoNet(DilatedStereoNet&&) noexcept = default;
DilatedStereoNet& DilatedStereoNet::operator=(DilatedStereoNet&&) noexcept = default;

const NetworkConfig& DilatedStereoNet::config() const { return impl_->cfg; }

Tensor DilatedStereoNet::features(const Tensor& image, BnMode mode) {
  return impl_->features(image, mode);
}
std::vector<Tensor> DilatedStereoNet::cost_filter(const Tensor& cost, BnMode mode) {
  return impl_->cost_filter(cost, mode);
}
std::pair<Tensor, Tensor> DilatedStereoNet::refinement_head(const Tensor& image,
                                                            const Tensor& disp,
                                                            const Tensor& e_p,
                                                            const Tensor& e_g,
                                                            BnMode mode) {
  return impl_->refinement_head(image, disp, e_p, e_g, mode);
}
ModelOutput DilatedStereoNet::forward(const Tensor& left, const Tensor& right,
                                      BnMode mode) {
  return impl_->forward(left, right, mode);
}
std::vector<Tensor>& DilatedStereoNet::parameters() { return impl_->params; }
const std::vector<std::string>& DilatedStereoNet::parameter_names() const {
  return impl_->names;
}
MacCount DilatedStereoNet::count_macs(int H, int W) const {
  return impl_->count_macs(H, W);
}

namespace {

void put_i32(std::ofstream& f, std::int32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_i64(std::ofstream& f, std::int64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
void put_str(std::ofstream& f, const std::string& s) {
  put_i32(f, static_cast<std::int32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_reals(std::ofstream& f, const std::vector<real>& v) {
  put_i64(f, static_cast<std::int64_t>(v.size()));
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(real)));
}
void put_ints(std::ofstream& f, const std::vector<int>& v) {
  put_i32(f, static_cast<std::int32_t>(v.size()));
  for (int x : v) put_i32(f, x);
}

std::int32_t get_i32(std::ifstream& f) {
  std::int32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::int64_t get_i64(std::ifstream& f) {
  std::int64_t v;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::ifstream& f) {
  const auto n = get_i32(f);
  std::string s(static_cast<size_t>(n), '\0');
  f.read(s.data(), n);
  return s;
}
std::vector<real> get_reals(std::ifstream& f) {
  const auto n = get_i64(f);
  std::vector<real> v(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(real)));
  return v;
}
std::vector<int> get_ints(std::ifstream& f) {
  const auto n = get_i32(f);
  std::vector<int> v(static_cast<size_t>(n));
  for (auto& x : v) x = get_i32(f);
  return v;
}

constexpr char kMagic[4] = {'S', 'D', 'N', '1'};

}  // namespace

void DilatedStereoNet::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_config("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  put_i32(f, 1);  // version
  put_i32(f, static_cast<std::int32_t>(sizeof(real)));
  const NetworkConfig& c = impl_->cfg;
  put_i32(f, c.feature_width);
  put_i32(f, c.repeats[0]);
  put_i32(f, c.repeats[1]);
  put_i32(f, c.repeats[2]);
  put_i32(f, c.max_disparity);
  put_ints(f, c.pool_grids);
  put_ints(f, c.pool_rates);
  put_ints(f, c.filter_dilations);
  put_ints(f, c.refine_dilations);
  put_i32(f, c.stages);
  put_i32(f, (c.refinement ? 1 : 0) | (c.use_photometric ? 2 : 0) |
                 (c.use_geometric ? 4 : 0) | (c.pyramid_pooling ? 8 : 0) |
                 (c.stop_gradient_refinement ? 16 : 0));
  put_i64(f, static_cast<std::int64_t>(impl_->params.size()));
  for (size_t i = 0; i < impl_->params.size(); ++i) {
    put_str(f, impl_->names[i]);
    put_ints(f, impl_->params[i].shape());
    put_reals(f, impl_->params[i].values());
  }
  std::int64_t nbn = 0;
  for (const auto& l : impl_->store)
    if (l.bn) ++nbn;
  put_i64(f, nbn);
  for (const auto& l : impl_->store) {
    if (!l.bn) continue;
    put_i32(f, l.stats.initialized ? 1 : 0);
    put_reals(f, l.stats.mean);
    put_reals(f, l.stats.var);
  }
  if (!f) fail_config("checkpoint write failed: " + path);
}

DilatedStereoNet DilatedStereoNet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_config("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    fail_config(path + ": not a checkpoint file");
  if (get_i32(f) != 1) fail_config(path + ": unsupported checkpoint version");
  if (get_i32(f) != static_cast<std::int32_t>(sizeof(real)))
    fail_config(path + ": checkpoint was written with a different scalar width");
  NetworkConfig c;
  c.feature_width = get_i32(f);
  c.repeats[0] = get_i32(f);
  c.repeats[1] = get_i32(f);
  c.repeats[2] = get_i32(f);
  c.max_disparity = get_i32(f);
  c.pool_grids = get_ints(f);
  c.pool_rates = get_ints(f);
  c.filter_dilations = get_ints(f);
  c.refine_dilations = get_ints(f);
  c.stages = get_i32(f);
  const auto flags = get_i32(f);
  c.refinement = flags & 1;
  c.use_photometric = flags & 2;
  c.use_geometric = flags & 4;
  c.pyramid_pooling = flags & 8;
  c.stop_gradient_refinement = flags & 16;

  DilatedStereoNet net(c, 0);
  const auto np = get_i64(f);
  if (np != static_cast<std::int64_t>(net.impl_->params.size()))
    fail_config(path + ": parameter count mismatch");
  for (size_t i = 0; i < net.impl_->params.size(); ++i) {
    const std::string name = get_str(f);
    if (name != net.impl_->names[i]) fail_config(path + ": parameter order mismatch");
    const auto shape = get_ints(f);
    if (shape != net.impl_->params[i].shape())
      fail_config(path + ": parameter shape mismatch for " + name);
    net.impl_->params[i].values() = get_reals(f);
  }
  const auto nbn = get_i64(f);
  std::int64_t seen = 0;
  for (auto& l : net.impl_->store) {
    if (!l.bn) continue;
    ++seen;
    l.stats.initialized = get_i32(f) != 0;
    l.stats.mean = get_reals(f);
    l.stats.var = get_reals(f);
  }
  if (seen != nbn || !f) fail_config(path + ": truncated checkpoint");
  return net;
}

MacCount count_macs_equal_rf_filter(const NetworkConfig& cfg, int H, int W) {
  cfg.validate();
  const int F = cfg.feature_width;
  const int L = cfg.max_disparity / 4, H4 = H / 4, W4 = W / 4;
  // receptive field of the real trunk: rf grows by (k-1)*d*jump per conv
  i64 rf = 1, jump = 1;
  auto grow = [&](int k, int d) { rf += static_cast<i64>(k - 1) * d * jump; };
  grow(3, 1);  // row 37
  grow(3, 1);  // row 38
  int max_dil = 1;
  for (int d : cfg.filter_dilations) max_dil = std::max(max_dil, d);
  for (int s = 0; s < cfg.stages; ++s) {
    grow(3, 1);  // stride-2 entry
    jump *= 2;
    grow(3, 1);        // carry conv on the bottleneck path
    grow(3, max_dil);  // widest parallel tap
    grow(3, 1);        // merge
    jump /= 2;         // transposed conv back to 1/4 resolution
    grow(3, 1);
    grow(3, 1);  // prediction conv
  }
  // plain stride-1 stack at 1/4 resolution reaching the same receptive field;
  // each 3^3 conv adds 2 to it
  const i64 n_convs = rf / 2;
  MacCount m;
  const int Fc = 2 * F;
  const ConvSpec body = ConvSpec::same3d(Fc, Fc, 3);
  const ConvSpec entry = ConvSpec::same3d(Fc, Fc, 3);
  const ConvSpec pred = ConvSpec::same3d(Fc, 2, 3);
  m.conv3d += conv_macs(entry, {L, H4, W4});
  m.conv3d += conv_macs(body, {L, H4, W4}) * (n_convs - 1);
  m.conv3d += conv_macs(pred, {L, H4, W4}) * cfg.stages;
  return m;
}

}  // namespace stereo
