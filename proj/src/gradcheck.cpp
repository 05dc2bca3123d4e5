#include <algorithm>
#include <cmath>

#include "stereo/gradcheck.hpp"
#include "stereo/geometry.hpp"
#include "stereo/loss.hpp"
#include "stereo/nn.hpp"

namespace stereo {

real gradcheck_max_rel_error(const std::function<Tensor()>& forward,
                             std::vector<Tensor> leaves, real h) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  Tensor loss = forward();
  backward(loss);

  std::vector<std::vector<real>> analytic;
  for (auto& l : leaves) {
    analytic.push_back(l.has_grad() ? l.grad() : std::vector<real>(l.values().size(), 0));
    l.zero_grad();
    l.set_requires_grad(false);  // numeric passes need no tape
  }

  real max_err = 0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    std::vector<real>& v = leaves[li].values();
    for (size_t j = 0; j < v.size(); ++j) {
      const real orig = v[j];
      v[j] = orig + h;
      const real fp = forward().item();
      v[j] = orig - h;
      const real fm = forward().item();
      v[j] = orig;
      const real numeric = (fp - fm) / (2 * h);
      const real a = analytic[li][j];
      const real denom = std::max({real(1), std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  for (auto& l : leaves) l.set_requires_grad(true);
  return max_err;
}

namespace {

Tensor rnd(const std::vector<int>& shape, Rng& rng, real lo = -1, real hi = 1) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero, for ops with a kink at the origin
Tensor rnd_off_zero(const std::vector<int>& shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.values()) {
    const real m = rng.uniform(real(0.2), real(1));
    v = rng.uniform(0, 1) < real(0.5) ? -m : m;
  }
  return t;
}

// scalar projection so every output element gets a distinct gradient path
Tensor project(const Tensor& out, const Tensor& coeffs) {
  return sum(mul(out, coeffs));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  struct Check {
    std::string name;
    std::function<real(std::uint64_t)> run;  // returns max rel error for a seed
  };
  std::vector<Check> checks;
  auto reg = [&](std::string name, std::function<real(std::uint64_t)> f) {
    checks.push_back({std::move(name), std::move(f)});
  };

  reg("elementwise_add_mul_sigmoid", [](std::uint64_t s) {
    Rng rng(s);
    Tensor a = rnd({2, 3}, rng), b = rnd({2, 3}, rng), c = rnd({2, 3}, rng);
    return gradcheck_max_rel_error(
        [&] { return sum(mul(add(a, b), sigmoid(c))); }, {a, b, c});
  });
  reg("relu", [](std::uint64_t s) {
    Rng rng(s);
    Tensor a = rnd_off_zero({3, 4}, rng);
    Tensor p = rnd({3, 4}, rng);
    return gradcheck_max_rel_error([&] { return project(relu(a), p); }, {a});
  });
  reg("abs_diff", [](std::uint64_t s) {
    Rng rng(s);
    Tensor a = rnd({3, 3}, rng, 1, 2), b = rnd({3, 3}, rng, -2, -1);
    Tensor p = rnd({3, 3}, rng);
    return gradcheck_max_rel_error([&] { return project(abs_diff(a, b), p); }, {a, b});
  });
  reg("softmax_axis", [](std::uint64_t s) {
    Rng rng(s);
    Tensor a = rnd({4, 5}, rng, -2, 2);
    Tensor p = rnd({4, 5}, rng);
    return gradcheck_max_rel_error([&] { return project(softmax_axis(a, 0), p); }, {a});
  });
  reg("concat_narrow_reshape", [](std::uint64_t s) {
    Rng rng(s);
    Tensor a = rnd({2, 3}, rng), b = rnd({2, 3}, rng);
    Tensor p = rnd({2, 2}, rng);
    return gradcheck_max_rel_error(
        [&] {
          Tensor cat = concat({a, b}, 1);                 // [2,6]
          Tensor cut = narrow(cat, 1, 2, 2);              // [2,2]
          return project(reshape(cut, {4, 1}), reshape(p, {4, 1}));
        },
        {a, b});
  });

  reg("conv2d_stride1", [](std::uint64_t s) {
    Rng rng(s);
    ConvSpec spec = ConvSpec::same2d(2, 2, 3);
    Tensor x = rnd({1, 2, 4, 4}, rng), w = rnd(spec.weight_shape(), rng),
           bias = rnd({2}, rng);
    Tensor p = rnd({1, 2, 4, 4}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(conv2d(x, spec, w, bias), p); }, {x, w, bias});
  });
  reg("conv2d_stride2_dil2", [](std::uint64_t s) {
    Rng rng(s);
    ConvSpec spec = ConvSpec::same2d(1, 2, 3, 1, 2);
    ConvSpec spec2 = ConvSpec::same2d(2, 1, 3, 2, 1);
    Tensor x = rnd({1, 1, 6, 6}, rng), w1 = rnd(spec.weight_shape(), rng),
           w2 = rnd(spec2.weight_shape(), rng);
    Tensor p = rnd({1, 1, 3, 3}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(conv2d(conv2d(x, spec, w1), spec2, w2), p); },
        {x, w1, w2});
  });
  reg("conv3d_stride1", [](std::uint64_t s) {
    Rng rng(s);
    ConvSpec spec = ConvSpec::same3d(2, 1, 3);
    Tensor x = rnd({1, 2, 3, 3, 3}, rng), w = rnd(spec.weight_shape(), rng),
           bias = rnd({1}, rng);
    Tensor p = rnd({1, 1, 3, 3, 3}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(conv3d(x, spec, w, bias), p); }, {x, w, bias});
  });
  reg("conv3d_dil2_stride2", [](std::uint64_t s) {
    Rng rng(s);
    ConvSpec d2 = ConvSpec::same3d(1, 1, 3, 1, 2);
    ConvSpec s2 = ConvSpec::same3d(1, 1, 3, 2, 1);
    Tensor x = rnd({1, 1, 4, 4, 4}, rng), w1 = rnd(d2.weight_shape(), rng),
           w2 = rnd(s2.weight_shape(), rng);
    Tensor p = rnd({1, 1, 2, 2, 2}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(conv3d(conv3d(x, d2, w1), s2, w2), p); }, {x, w1, w2});
  });
  reg("conv3d_transposed", [](std::uint64_t s) {
    Rng rng(s);
    ConvSpec up = ConvSpec::up3d(1, 1, 3, 2);
    Tensor x = rnd({1, 1, 2, 2, 2}, rng), w = rnd(up.weight_shape(), rng);
    Tensor p = rnd({1, 1, 4, 4, 4}, rng);
    return gradcheck_max_rel_error([&] { return project(conv3d(x, up, w), p); },
                                   {x, w});
  });

  reg("batch_norm_train", [](std::uint64_t s) {
    Rng rng(s);
    Tensor x = rnd({1, 2, 3, 3}, rng), g = rnd({2}, rng, real(0.5), real(1.5)),
           b = rnd({2}, rng);
    Tensor p = rnd({1, 2, 3, 3}, rng);
    return gradcheck_max_rel_error(
        [&] {
          BatchNormStats st;  // fresh stats: the op under test is the train path
          return project(batch_norm(x, g, b, st, BnMode::kTrain), p);
        },
        {x, g, b});
  });
  reg("pool_avg_grid_remainder", [](std::uint64_t s) {
    Rng rng(s);
    Tensor x = rnd({1, 1, 5, 5}, rng);
    Tensor p = rnd({1, 1, 3, 3}, rng);
    return gradcheck_max_rel_error([&] { return project(pool_avg_grid(x, 2), p); },
                                   {x});
  });
  reg("pool_global_avg", [](std::uint64_t s) {
    Rng rng(s);
    Tensor x = rnd({1, 2, 3, 4}, rng);
    Tensor p = rnd({1, 2, 1, 1}, rng);
    return gradcheck_max_rel_error([&] { return project(pool_global_avg(x), p); },
                                   {x});
  });
  reg("interp_bilinear2d", [](std::uint64_t s) {
    Rng rng(s);
    Tensor x = rnd({1, 1, 3, 3}, rng);
    Tensor p = rnd({1, 1, 5, 7}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(interp_bilinear2d(x, 5, 7), p); }, {x});
  });
  reg("interp_trilinear3d", [](std::uint64_t s) {
    Rng rng(s);
    Tensor x = rnd({1, 2, 2, 3, 3}, rng);
    Tensor p = rnd({1, 2, 4, 5, 5}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(interp_trilinear3d(x, 4, 5, 5), p); }, {x});
  });

  reg("warp_horizontal", [](std::uint64_t s) {
    Rng rng(s);
    const int H = 3, W = 6;
    Tensor src = rnd({2, H, W}, rng);
    // disparities with fractional parts away from the sample-grid kinks
    Tensor disp = Tensor::zeros({H, W});
    for (auto& v : disp.values())
      v = real(rng.uniform_int(0, 2)) + rng.uniform(real(0.25), real(0.75));
    Tensor p = rnd({2, H, W}, rng);
    return gradcheck_max_rel_error([&] { return project(warp_horizontal(src, disp), p); },
                                   {src, disp});
  });
  reg("soft_argmax_disparity", [](std::uint64_t s) {
    Rng rng(s);
    Tensor cost = rnd({5, 3, 3}, rng, -2, 2);
    Tensor p = rnd({3, 3}, rng);
    return gradcheck_max_rel_error(
        [&] { return project(soft_argmax_disparity(cost).disp, p); }, {cost});
  });
  reg("cost_volume", [](std::uint64_t s) {
    Rng rng(s);
    Tensor fl = rnd({1, 2, 3, 6}, rng), fr = rnd({1, 2, 3, 6}, rng);
    Tensor p = rnd({1, 4, 2, 3, 6}, rng);
    return gradcheck_max_rel_error(
        [&] {
          auto [cl, cr] = build_cost_volume(fl, fr, 8);
          return project(concat({cl.vol, cr.vol}, 1), p);
        },
        {fl, fr});
  });
  reg("consistency_maps", [](std::uint64_t s) {
    Rng rng(s);
    const int H = 3, W = 6;
    Tensor il = rnd({3, H, W}, rng), ir = rnd({3, H, W}, rng);
    Tensor dl = Tensor::zeros({H, W}), dr = Tensor::zeros({H, W});
    for (auto& v : dl.values()) v = rng.uniform(real(0.3), real(1.7));
    for (auto& v : dr.values()) v = rng.uniform(real(0.3), real(1.7));
    Tensor pp = rnd({3, H, W}, rng), pg = rnd({H, W}, rng);
    return gradcheck_max_rel_error(
        [&] {
          ConsistencyMaps m = consistency_maps(il, ir, DisparityField::dense(dl, View::kLeft),
                                               DisparityField::dense(dr, View::kRight));
          return add(project(m.e_p, pp), project(m.e_g, pg));
        },
        {il, ir, dl, dr});
  });

  reg("huber_stage_loss", [](std::uint64_t s) {
    Rng rng(s);
    const int H = 4, W = 4;
    Tensor gtd = rnd({H, W}, rng, 2, 6);
    DisparityField gt = DisparityField::dense(gtd, View::kLeft);
    gt.valid[3] = 0;
    std::vector<std::uint8_t> excl((size_t)H * W, 0);
    excl[5] = 1;
    // offsets straddle the quadratic/linear switch but stay off the kink
    Tensor pred = Tensor::zeros({H, W});
    for (size_t i = 0; i < pred.values().size(); ++i) {
      const real off = rng.uniform(0, 1) < real(0.5) ? rng.uniform(real(0.1), real(0.7))
                                                     : rng.uniform(real(1.3), real(2.5));
      pred.values()[i] = gtd.values()[i] + (rng.uniform(0, 1) < real(0.5) ? -off : off);
    }
    return gradcheck_max_rel_error(
        [&] {
          return stage_loss(DisparityField::dense(pred, View::kLeft), gt, &excl,
                            real(1)).loss;
        },
        {pred});
  });
  reg("occlusion_bce", [](std::uint64_t s) {
    Rng rng(s);
    const int H = 3, W = 4;
    Tensor gt = Tensor::zeros({H, W});
    for (auto& v : gt.values()) v = rng.uniform(0, 1) < real(0.4) ? real(1) : real(0);
    Tensor prob = rnd({H, W}, rng, real(0.1), real(0.9));
    return gradcheck_max_rel_error(
        [&] { return occlusion_loss(OcclusionMap{prob}, OcclusionMap{gt}); }, {prob});
  });
  reg("total_loss_composite", [](std::uint64_t s) {
    Rng rng(s);
    const int H = 4, W = 4;
    Tensor gtd = rnd({H, W}, rng, 2, 6);
    DisparityField gt = DisparityField::dense(gtd, View::kLeft);
    Tensor p1 = add_scalar(rnd({H, W}, rng, real(0.1), real(0.6)), real(3));
    Tensor p2 = add_scalar(rnd({H, W}, rng, real(0.1), real(0.6)), real(3));
    Tensor pr = add_scalar(rnd({H, W}, rng, real(0.1), real(0.6)), real(3));
    Tensor occ_gt = Tensor::zeros({H, W});
    for (auto& v : occ_gt.values()) v = rng.uniform(0, 1) < real(0.3) ? real(1) : real(0);
    Tensor prob = rnd({H, W}, rng, real(0.2), real(0.8));
    LossWeights w;
    w.stage = {real(0.2), real(0.4)};
    return gradcheck_max_rel_error(
        [&] {
          std::vector<StageLoss> st = {
              stage_loss(DisparityField::dense(p1, View::kLeft), gt, nullptr, real(1)),
              stage_loss(DisparityField::dense(p2, View::kLeft), gt, nullptr, real(1))};
          Tensor lr = refinement_loss(DisparityField::dense(pr, View::kLeft), gt,
                                      nullptr, real(1));
          Tensor lo = occlusion_loss(OcclusionMap{prob}, OcclusionMap{occ_gt});
          return total_loss(st, &lr, &lo, w).total;
        },
        {p1, p2, pr, prob});
  });

  std::vector<GradCheckResult> results;
  for (auto& c : checks) {
    real worst = 0;
    for (std::uint64_t k = 0; k < 5; ++k)  // five independent seeds per op
      worst = std::max(worst, c.run(seed * 1000003ull + k));
    results.push_back({c.name, worst, worst < real(1e-4)});
  }
  return results;
}

}  // namespace stereo
