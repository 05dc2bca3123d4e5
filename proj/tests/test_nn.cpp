#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stereo/gradcheck.hpp"
#include "stereo/nn.hpp"
#include "oracles.hpp"

using namespace stereo;

namespace {

Tensor wrap4(std::vector<int> s, std::vector<real> v) { return Tensor::from(s, std::move(v)); }

real max_abs_diff(const std::vector<real>& a, const std::vector<real>& b) {
  REQUIRE(a.size() == b.size());
  real m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d: all-ones 3x3, stride 1, pad 1") {
  Tensor in = Tensor::full({1, 1, 3, 3}, 1);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1);
  ConvSpec s = ConvSpec::same2d(1, 1, 3);
  Tensor out = conv2d(in, s, w);
  CHECK(out.shape() == std::vector<int>{1, 1, 3, 3});
  CHECK(out.values()[4] == 9.0);  // center
  CHECK(out.values()[0] == 4.0);  // corner
}

TEST_CASE("conv2d: identity kernel reproduces input") {
  Rng rng(5);
  Tensor in = oracle::random_tensor({1, 2, 4, 5}, rng);
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  w.values()[size_t((0 * 2 + 0) * 9 + 4)] = 1;  // co=0 <- ci=0 center tap
  w.values()[size_t((1 * 2 + 1) * 9 + 4)] = 1;  // co=1 <- ci=1 center tap
  Tensor out = conv2d(in, ConvSpec::same2d(2, 2, 3), w);
  CHECK(max_abs_diff(out.values(), in.values()) == 0.0);
}

TEST_CASE("conv2d matches direct oracle, dilation 2") {
  Rng rng(7);
  Tensor in = oracle::random_tensor({1, 2, 5, 5}, rng);
  ConvSpec s = ConvSpec::same2d(2, 3, 3, 1, 2);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  std::vector<real> bias{0.1, -0.2, 0.3};
  Tensor out = conv2d(in, s, w, Tensor::from({3}, bias));
  int Ho, Wo;
  auto ref = oracle::conv2d_direct(in.values(), 1, 2, 5, 5, w.values(), &bias, 3, 3, 3, 1, 1,
                                   2, 2, 2, 2, Ho, Wo);
  CHECK(out.shape() == std::vector<int>{1, 3, Ho, Wo});
  CHECK(max_abs_diff(out.values(), ref) < 1e-10);
}

TEST_CASE("conv2d matches direct oracle across spec grid") {
  Rng rng(17);
  for (int stride : {1, 2})
    for (int dil : {1, 2})
      for (int k : {1, 3}) {
        Tensor in = oracle::random_tensor({2, 3, 7, 6}, rng);
        ConvSpec s = ConvSpec::same2d(3, 2, k, stride, dil);
        Tensor w = oracle::random_tensor(s.weight_shape(), rng);
        Tensor out = conv2d(in, s, w);
        int Ho, Wo;
        auto ref = oracle::conv2d_direct(in.values(), 2, 3, 7, 6, w.values(), nullptr, 2, k,
                                         k, stride, stride, s.padding[0], s.padding[1], dil,
                                         dil, Ho, Wo);
        CHECK(max_abs_diff(out.values(), ref) < 1e-10);
      }
}

TEST_CASE("conv3d: all-ones 3x3x3 center is 27") {
  Tensor in = Tensor::full({1, 1, 3, 3, 3}, 1);
  Tensor w = Tensor::full({1, 1, 3, 3, 3}, 1);
  Tensor out = conv3d(in, ConvSpec::same3d(1, 1, 3), w);
  CHECK(out.values()[13] == 27.0);
}

TEST_CASE("conv3d matches direct oracle, per-axis dilation (1,2,4)") {
  Rng rng(23);
  Tensor in = oracle::random_tensor({1, 2, 8, 8, 8}, rng);
  ConvSpec s;
  s.kernel = {3, 3, 3};
  s.stride = {1, 1, 1};
  s.dilation = {1, 2, 4};
  s.padding = {1, 2, 4};
  s.in_channels = 2;
  s.out_channels = 2;
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor out = conv3d(in, s, w);
  int Do, Ho, Wo;
  auto ref = oracle::conv3d_direct(in.values(), 1, 2, 8, 8, 8, w.values(), nullptr, 2, 3, 3,
                                   3, 1, 1, 1, 1, 2, 4, 1, 2, 4, Do, Ho, Wo);
  CHECK(out.shape() == std::vector<int>{1, 2, Do, Ho, Wo});
  CHECK(max_abs_diff(out.values(), ref) < 1e-10);
}

TEST_CASE("conv3d stride 2 matches direct oracle") {
  Rng rng(29);
  Tensor in = oracle::random_tensor({1, 3, 6, 6, 6}, rng);
  ConvSpec s = ConvSpec::same3d(3, 2, 3, 2);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor out = conv3d(in, s, w);
  int Do, Ho, Wo;
  auto ref = oracle::conv3d_direct(in.values(), 1, 3, 6, 6, 6, w.values(), nullptr, 2, 3, 3,
                                   3, 2, 2, 2, 1, 1, 1, 1, 1, 1, Do, Ho, Wo);
  CHECK(max_abs_diff(out.values(), ref) < 1e-10);
}

TEST_CASE("transposed conv3d doubles extent and matches scatter oracle") {
  Rng rng(31);
  Tensor in = oracle::random_tensor({1, 1, 2, 2, 2}, rng);
  ConvSpec s = ConvSpec::up3d(1, 2, 3, 2);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor out = conv3d(in, s, w);
  CHECK(out.shape() == std::vector<int>{1, 2, 4, 4, 4});
  int Do, Ho, Wo;
  auto ref = oracle::conv3d_transposed_scatter(in.values(), 1, 1, 2, 2, 2, w.values(),
                                               nullptr, 2, 3, 3, 3, 2, 1, 1, Do, Ho, Wo);
  CHECK(max_abs_diff(out.values(), ref) < 1e-10);
}

TEST_CASE("transposed conv3d on delta input scatters the kernel") {
  Tensor in = Tensor::zeros({1, 1, 2, 2, 2});
  in.values()[0] = 1;  // delta at (0,0,0)
  ConvSpec s = ConvSpec::up3d(1, 1, 3, 2);
  Rng rng(37);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor out = conv3d(in, s, w);
  // output(oz,oy,ox) = w(oz+1, oy+1, ox+1) where in range (pad 1)
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        CHECK(out.values()[size_t((z * 4 + y) * 4 + x)] ==
              doctest::Approx(w.values()[size_t(((z + 1) * 3 + y + 1) * 3 + x + 1)]));
}

TEST_CASE("conv errors") {
  Tensor in = Tensor::full({1, 2, 4, 4}, 1);
  ConvSpec s = ConvSpec::same2d(3, 1, 3);  // wrong channel count
  Tensor w = Tensor::zeros(s.weight_shape());
  CHECK_THROWS_AS(conv2d(in, s, w), std::invalid_argument);

  ConvSpec tiny = ConvSpec::same2d(2, 1, 3);
  tiny.padding = {0, 0};
  tiny.stride = {8, 8};
  Tensor w2 = Tensor::zeros(tiny.weight_shape());
  Tensor small = Tensor::full({1, 2, 2, 2}, 1);
  CHECK_THROWS_AS(conv2d(small, tiny, w2), std::invalid_argument);
}

TEST_CASE("batch_norm: constant per-channel input gives beta in train mode") {
  Tensor in = Tensor::zeros({2, 3, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) in.values()[size_t((n * 3 + c) * 16 + i)] = real(c + 1);
  Tensor gamma = Tensor::full({3}, 1);
  Tensor beta = Tensor::from({3}, {0.5, -1, 2});
  BatchNormStats st;
  Tensor out = batch_norm(in, gamma, beta, st, BnMode::kTrain);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i)
        CHECK(out.values()[size_t((n * 3 + c) * 16 + i)] ==
              doctest::Approx(beta.values()[size_t(c)]));
}

TEST_CASE("batch_norm: standardizes batch statistics") {
  Rng rng(41);
  Tensor in = oracle::random_tensor({4, 2, 8, 8}, rng, -3, 3);
  Tensor gamma = Tensor::full({2}, 1);
  Tensor beta = Tensor::zeros({2});
  BatchNormStats st;
  Tensor out = batch_norm(in, gamma, beta, st, BnMode::kTrain);
  for (int c = 0; c < 2; ++c) {
    real m = 0, v = 0;
    int cnt = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 64; ++i) {
        m += out.values()[size_t((n * 2 + c) * 64 + i)];
        ++cnt;
      }
    m /= cnt;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 64; ++i) {
        const real d = out.values()[size_t((n * 2 + c) * 64 + i)] - m;
        v += d * d;
      }
    v /= cnt;
    CHECK(std::abs(m) < 1e-6);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts variance slightly
  }
}

TEST_CASE("batch_norm: eval before train is a state error") {
  Tensor in = Tensor::full({1, 2, 2, 2}, 1);
  Tensor gamma = Tensor::full({2}, 1), beta = Tensor::zeros({2});
  BatchNormStats st;
  CHECK_THROWS_AS(batch_norm(in, gamma, beta, st, BnMode::kEval), std::logic_error);
}

TEST_CASE("pool: trivial cases") {
  Tensor g4 = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor ga = pool_global_avg(g4);
  CHECK(ga.values()[0] == doctest::Approx(2.5));

  Tensor c = Tensor::full({1, 2, 6, 6}, 7);
  Tensor p = pool_avg_grid(c, 2);
  CHECK(p.shape() == std::vector<int>{1, 2, 3, 3});
  for (real v : p.values()) CHECK(v == doctest::Approx(7.0));

  CHECK_THROWS_AS(pool_avg_grid(Tensor::full({1, 1, 3, 3}, 1), 5), std::invalid_argument);
}

TEST_CASE("pool: remainder windows average over valid cells") {
  Tensor in = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor p = pool_avg_grid(in, 2);
  CHECK(p.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(p.values()[0] == doctest::Approx((1 + 2 + 4 + 5) / 4.0));
  CHECK(p.values()[1] == doctest::Approx((3 + 6) / 2.0));
  CHECK(p.values()[3] == doctest::Approx(9.0));
}

TEST_CASE("interpolate: constants and linear ramps are exact") {
  Tensor c = Tensor::full({1, 1, 3, 3}, 4.2);
  Tensor up = interp_bilinear2d(c, 7, 5);
  for (real v : up.values()) CHECK(v == doctest::Approx(4.2));

  // 2x upsample of a linear ramp reproduces the ramp at all sample points
  Tensor ramp = Tensor::zeros({1, 1, 1, 4});
  for (int x = 0; x < 4; ++x) ramp.values()[size_t(x)] = real(x);
  Tensor r2 = interp_bilinear2d(ramp, 1, 7);
  for (int x = 0; x < 7; ++x)
    CHECK(r2.values()[size_t(x)] == doctest::Approx(real(x) * 3.0 / 6.0));

  Tensor c3 = Tensor::full({1, 2, 2, 2, 2}, -1.5);
  Tensor up3 = interp_trilinear3d(c3, 5, 4, 3);
  for (real v : up3.values()) CHECK(v == doctest::Approx(-1.5));
}

TEST_CASE("gradcheck: conv2d/conv3d variants") {
  Rng rng(43);
  for (int stride : {1, 2})
    for (int dil : {1, 2}) {
      Tensor in = oracle::random_tensor({1, 2, 5, 5}, rng);
      ConvSpec s = ConvSpec::same2d(2, 2, 3, stride, dil);
      Tensor w = oracle::random_tensor(s.weight_shape(), rng);
      Tensor b = oracle::random_tensor({2}, rng);
      Tensor probe;
      auto fn = [&] {
        Tensor out = conv2d(in, s, w, b);
        if (!probe.defined()) probe = oracle::random_tensor(out.shape(), rng);
        return sum(mul(out, probe));
      };
      CHECK(gradcheck_max_rel_error(fn, {in, w, b}) < 1e-4);
    }

  {
    Tensor in = oracle::random_tensor({1, 2, 4, 4, 4}, rng);
    ConvSpec s;
    s.kernel = {3, 3, 3};
    s.stride = {1, 1, 1};
    s.dilation = {1, 2, 1};
    s.padding = {1, 2, 1};
    s.in_channels = 2;
    s.out_channels = 2;
    Tensor w = oracle::random_tensor(s.weight_shape(), rng);
    Tensor b = oracle::random_tensor({2}, rng);
    Tensor probe;
    auto fn = [&] {
      Tensor out = conv3d(in, s, w, b);
      if (!probe.defined()) probe = oracle::random_tensor(out.shape(), rng);
      return sum(mul(out, probe));
    };
    CHECK(gradcheck_max_rel_error(fn, {in, w, b}) < 1e-4);
  }

  {
    Tensor in = oracle::random_tensor({1, 2, 2, 3, 3}, rng);
    ConvSpec s = ConvSpec::up3d(2, 2, 3, 2);
    Tensor w = oracle::random_tensor(s.weight_shape(), rng);
    Tensor b = oracle::random_tensor({2}, rng);
    Tensor probe;
    auto fn = [&] {
      Tensor out = conv3d(in, s, w, b);
      if (!probe.defined()) probe = oracle::random_tensor(out.shape(), rng);
      return sum(mul(out, probe));
    };
    CHECK(gradcheck_max_rel_error(fn, {in, w, b}) < 1e-4);
  }
}

TEST_CASE("gradcheck: batch_norm train mode vs finite differences") {
  Rng rng(47);
  Tensor in = oracle::random_tensor({2, 2, 3, 3}, rng);
  Tensor gamma = oracle::random_tensor({2}, rng, 0.5, 1.5);
  Tensor beta = oracle::random_tensor({2}, rng);
  Tensor probe = oracle::random_tensor({2, 2, 3, 3}, rng);
  auto fn = [&] {
    BatchNormStats st;  // fresh stats: forward must be a pure function for fd
    return sum(mul(batch_norm(in, gamma, beta, st, BnMode::kTrain), probe));
  };
  CHECK(gradcheck_max_rel_error(fn, {in, gamma, beta}) < 1e-4);
}

TEST_CASE("gradcheck: pooling and interpolation") {
  Rng rng(53);
  Tensor in = oracle::random_tensor({1, 2, 5, 5}, rng);
  Tensor probe_g = oracle::random_tensor({1, 2, 3, 3}, rng);
  CHECK(gradcheck_max_rel_error([&] { return sum(mul(pool_avg_grid(in, 2), probe_g)); },
                                {in}) < 1e-5);
  CHECK(gradcheck_max_rel_error([&] { return scale(sum(pool_global_avg(in)), 1.7); }, {in}) <
        1e-5);

  Tensor probe_b = oracle::random_tensor({1, 2, 9, 7}, rng);
  CHECK(gradcheck_max_rel_error(
            [&] { return sum(mul(interp_bilinear2d(in, 9, 7), probe_b)); }, {in}) < 1e-4);

  Tensor in3 = oracle::random_tensor({1, 1, 3, 4, 4}, rng);
  Tensor probe_t = oracle::random_tensor({1, 1, 6, 8, 8}, rng);
  CHECK(gradcheck_max_rel_error(
            [&] { return sum(mul(interp_trilinear3d(in3, 6, 8, 8), probe_t)); }, {in3}) <
        1e-4);
}

TEST_CASE("composite conv->bn->relu->sum gradient") {
  Rng rng(59);
  Tensor in = oracle::random_tensor({1, 2, 4, 4}, rng);
  ConvSpec s = ConvSpec::same2d(2, 3, 3);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor b = oracle::random_tensor({3}, rng);
  Tensor gamma = oracle::random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = oracle::random_tensor({3}, rng);
  auto fn = [&] {
    BatchNormStats st;
    return sum(relu(batch_norm(conv2d(in, s, w, b), gamma, beta, st, BnMode::kTrain)));
  };
  CHECK(gradcheck_max_rel_error(fn, {in, w, gamma, beta}) < 1e-4);
}

TEST_CASE("forward determinism at fixed thread count") {
  Rng rng(61);
  Tensor in = oracle::random_tensor({1, 3, 8, 8}, rng);
  ConvSpec s = ConvSpec::same2d(3, 4, 3);
  Tensor w = oracle::random_tensor(s.weight_shape(), rng);
  Tensor a = conv2d(in, s, w);
  Tensor b = conv2d(in, s, w);
  CHECK(a.values() == b.values());
}

TEST_CASE("mac counter: analytic 3x3 same conv on 4x4") {
  ConvSpec s = ConvSpec::same2d(1, 1, 3);
  CHECK(conv_macs(s, {4, 4}) == 144);  // 9 taps * 16 outputs
  ConvSpec wide = ConvSpec::same2d(2, 2, 3);
  CHECK(conv_macs(wide, {4, 4}) == 4 * 144);  // doubling width quadruples MACs
}
