#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stereo/gradcheck.hpp"
#include "stereo/loss.hpp"

using namespace stereo;

namespace {
DisparityField field(Tensor t) { return DisparityField::dense(std::move(t), View::kLeft); }
}  // namespace

TEST_CASE("stage loss is zero at the ground truth and quadratic for small errors") {
  Tensor gt = Tensor::full({4, 4}, real(7));
  CHECK(stage_loss(field(gt), field(gt), nullptr, real(1)).loss.item() == real(0));

  Tensor off = Tensor::full({4, 4}, real(7.5));  // uniform 0.5 px error
  StageLoss s = stage_loss(field(off), field(gt), nullptr, real(1));
  CHECK(s.loss.item() == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(s.valid_pixels == 16);
  CHECK(s.sum() == doctest::Approx(16 * 0.125));

  // linear branch: error 3, delta 1 -> 1*(3-0.5) = 2.5
  Tensor far = Tensor::full({4, 4}, real(10));
  CHECK(stage_loss(field(far), field(gt), nullptr, real(1)).loss.item() ==
        doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("stage loss matches a scalar-loop oracle on random 8x8 fields") {
  Rng rng(101);
  Tensor pred = oracle::random_tensor({8, 8}, rng, 0, 12);
  Tensor gt = oracle::random_tensor({8, 8}, rng, 0, 12);
  const real delta = real(1);
  DisparityField g = field(gt);
  // knock out a few pixels via validity and a few more via exclusion
  std::vector<std::uint8_t> excl(64, 0);
  g.valid[3] = 0;
  g.valid[40] = 0;
  excl[10] = 1;
  excl[41] = 1;

  double acc = 0;
  int m = 0;
  for (int i = 0; i < 64; ++i) {
    if (!g.valid[(size_t)i] || excl[(size_t)i]) continue;
    const double r = std::abs((double)pred.values()[(size_t)i] - (double)gt.values()[(size_t)i]);
    acc += r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
    ++m;
  }
  StageLoss s = stage_loss(field(pred), g, &excl, delta);
  CHECK(s.valid_pixels == m);
  CHECK(s.loss.item() == doctest::Approx(acc / m).epsilon(1e-12));
}

TEST_CASE("stage loss error handling") {
  Tensor a = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(stage_loss(field(a), field(Tensor::zeros({2, 3})), nullptr, real(1)),
                  std::invalid_argument);
  DisparityField g = field(a);
  g.valid.assign(4, 0);
  CHECK_THROWS_AS(stage_loss(field(a), g, nullptr, real(1)), std::logic_error);
  CHECK_THROWS_AS(stage_loss(field(a), field(a), nullptr, real(0)), std::invalid_argument);
}

TEST_CASE("excluded pixels contribute zero gradient, bit-identical under GT perturbation") {
  Rng rng(7);
  std::vector<std::uint8_t> excl(16, 0);
  excl[5] = 1;
  excl[9] = 1;
  auto run = [&](real poison) {
    Rng r2(7);
    Tensor pred = oracle::random_tensor({4, 4}, r2, 0, 5);
    Tensor gt = oracle::random_tensor({4, 4}, r2, 0, 5);
    gt.values()[5] += poison;
    gt.values()[9] -= poison;
    pred.set_requires_grad(true);
    backward(stage_loss(field(pred), field(gt), &excl, real(1)).loss);
    return pred.grad();
  };
  auto g0 = run(0), g1 = run(real(1000));
  for (int i = 0; i < 16; ++i) CHECK(g0[(size_t)i] == g1[(size_t)i]);
  CHECK(g0[5] == real(0));
  CHECK(g0[9] == real(0));
}

TEST_CASE("loss is invariant to the count of invalid pixels") {
  Tensor pred = Tensor::from({1, 4}, {2, 2, 2, 2});
  Tensor gt = Tensor::from({1, 4}, {real(2.5), real(2.5), real(99), real(99)});
  DisparityField g = field(gt);
  g.valid = {1, 1, 0, 0};
  const real two = stage_loss(field(pred), g, nullptr, real(1)).loss.item();
  g.valid = {1, 1, 0, 1};
  gt.values()[3] = real(2.5);
  const real three = stage_loss(field(pred), g, nullptr, real(1)).loss.item();
  CHECK(two == doctest::Approx(three).epsilon(1e-15));
  CHECK(two == doctest::Approx(0.125));
}

TEST_CASE("data loss weighting") {
  LossWeights w;
  std::vector<Tensor> ones = {Tensor::scalar(1), Tensor::scalar(1), Tensor::scalar(1)};
  CHECK(data_loss(ones, w).item() == doctest::Approx(1.2).epsilon(1e-15));
  std::vector<Tensor> zeros = {Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
  CHECK(data_loss(zeros, w).item() == real(0));
  std::vector<Tensor> one = {Tensor::scalar(real(3))};
  CHECK(data_loss(one, w).item() == doctest::Approx(0.2 * 3));
  std::vector<Tensor> four(4, Tensor::scalar(1));
  CHECK_THROWS_AS(data_loss(four, w), std::invalid_argument);
  CHECK_THROWS_AS(data_loss({}, w), std::invalid_argument);
  LossWeights bad;
  bad.stage[1] = -1;
  CHECK_THROWS_AS(data_loss(ones, bad), std::invalid_argument);
}

TEST_CASE("occlusion loss anchors: perfect prediction and the 0.5 plateau") {
  Tensor half = Tensor::full({4, 4}, real(0.5));
  Tensor gt01 = Tensor::zeros({4, 4});
  for (int i = 0; i < 8; ++i) gt01.values()[(size_t)i] = 1;
  CHECK(occlusion_loss({half}, {gt01}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor near = Tensor::zeros({4, 4});
  for (int i = 0; i < 16; ++i)
    near.values()[(size_t)i] = gt01.values()[(size_t)i] == 1 ? real(1) - real(1e-7)
                                                             : real(1e-7);
  CHECK(occlusion_loss({near}, {gt01}).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("occlusion loss matches a scalar oracle") {
  Rng rng(55);
  Tensor pred = oracle::random_tensor({5, 5}, rng, real(0.01), real(0.99));
  Tensor gt = Tensor::zeros({5, 5});
  for (auto& v : gt.values()) v = rng.uniform(0, 1) < 0.4 ? real(1) : real(0);
  double acc = 0;
  for (int i = 0; i < 25; ++i) {
    const double y = pred.values()[(size_t)i], t = gt.values()[(size_t)i];
    acc += -(t * std::log(y) + (1 - t) * std::log(1 - y));
  }
  CHECK(occlusion_loss({pred}, {gt}).item() == doctest::Approx(acc / 25).epsilon(1e-12));
}

TEST_CASE("loss gradchecks") {
  Rng rng(77);
  Tensor pred = oracle::random_tensor({4, 4}, rng, 0, 6);
  Tensor gt = oracle::random_tensor({4, 4}, rng, 0, 6);
  // keep residuals away from the Huber kink |r| = delta
  for (int i = 0; i < 16; ++i) {
    real& p = pred.values()[(size_t)i];
    const real r = p - gt.values()[(size_t)i];
    if (std::abs(std::abs(r) - 1) < real(0.05)) p += real(0.2);
  }
  pred.set_requires_grad(true);
  real err = gradcheck_max_rel_error(
      [&]() { return stage_loss(field(pred), field(gt), nullptr, real(1)).loss; }, {pred});
  CHECK(err < 1e-6);

  Tensor op = oracle::random_tensor({3, 3}, rng, real(0.1), real(0.9));
  Tensor ot = Tensor::zeros({3, 3});
  for (auto& v : ot.values()) v = rng.uniform(0, 1) < 0.5 ? real(1) : real(0);
  op.set_requires_grad(true);
  err = gradcheck_max_rel_error([&]() { return occlusion_loss({op}, {ot}); }, {op});
  CHECK(err < 1e-6);
}

TEST_CASE("total loss composition and report invariants") {
  LossWeights w;
  Tensor gt = Tensor::full({4, 4}, real(3));
  std::vector<StageLoss> stages;
  for (int k = 0; k < 3; ++k) {
    Tensor p = Tensor::full({4, 4}, real(3) + real(0.5) * real(k + 1));
    stages.push_back(stage_loss(field(p), field(gt), nullptr, w.huber_delta));
  }
  // unit anchors: L_d = L_r = L_o = 1 with paper-style lambdas -> 2.5
  {
    LossWeights u;
    u.stage = {real(1)};
    std::vector<StageLoss> s1 = {{Tensor::scalar(1), 16}};
    Tensor r = Tensor::scalar(1), o = Tensor::scalar(1);
    LossReport rep = total_loss(s1, &r, &o, u);
    CHECK(rep.total_value == doctest::Approx(1 + 1.2 + 0.3).epsilon(1e-15));
  }
  // refinement and occlusion disabled -> total == L_d exactly
  {
    std::vector<StageLoss> copy;
    for (int k = 0; k < 3; ++k) {
      Tensor p = Tensor::full({4, 4}, real(3) + real(0.5) * real(k + 1));
      copy.push_back(stage_loss(field(p), field(gt), nullptr, w.huber_delta));
    }
    LossReport rep = total_loss(copy, nullptr, nullptr, w);
    CHECK(rep.total_value == rep.data);
    CHECK(rep.refine == real(0));
    CHECK(rep.occlusion == real(0));
    CHECK(rep.valid_pixels == 16);
    CHECK(rep.stage.size() == 3);
    CHECK(rep.stage[0] == doctest::Approx(0.125));
  }
  // full composition recomposes within 1e-9 and backward flows to the prediction
  {
    Tensor p = Tensor::full({4, 4}, real(3.5));
    p.set_requires_grad(true);
    DisparityField pf = field(p);
    std::vector<StageLoss> s = {stage_loss(pf, field(gt), nullptr, w.huber_delta)};
    Tensor r = refinement_loss(pf, field(gt), nullptr, w.huber_delta);
    Tensor ogt = Tensor::zeros({4, 4});
    Tensor oprob = Tensor::full({4, 4}, real(0.5));
    Tensor o = occlusion_loss({oprob}, {ogt});
    LossWeights w1 = w;
    w1.stage = {real(0.2)};
    LossReport rep = total_loss(s, &r, &o, w1);
    CHECK(rep.total_value ==
          doctest::Approx(0.2 * 0.125 + 1.2 * 0.125 + 0.3 * std::log(2.0)).epsilon(1e-12));
    backward(rep.total);
    // dL/dp per pixel: (0.2 + 1.2) * 0.5 / 16
    for (real gv : p.grad()) CHECK(gv == doctest::Approx((0.2 + 1.2) * 0.5 / 16).epsilon(1e-12));
  }
}

TEST_CASE("total loss gradient matches finite differences through composition") {
  Rng rng(13);
  LossWeights w;
  w.stage = {real(0.2), real(0.4)};
  Tensor gt = oracle::random_tensor({4, 4}, rng, 1, 5);
  Tensor pred = oracle::random_tensor({4, 4}, rng, 1, 5);
  for (int i = 0; i < 16; ++i) {
    real& p = pred.values()[(size_t)i];
    if (std::abs(std::abs(p - gt.values()[(size_t)i]) - 1) < real(0.05)) p += real(0.2);
  }
  Tensor ogt = Tensor::zeros({4, 4});
  Tensor oprob = oracle::random_tensor({4, 4}, rng, real(0.2), real(0.8));
  pred.set_requires_grad(true);
  oprob.set_requires_grad(true);
  real err = gradcheck_max_rel_error(
      [&]() {
        DisparityField pf = field(pred);
        std::vector<StageLoss> s = {stage_loss(pf, field(gt), nullptr, w.huber_delta),
                                    stage_loss(pf, field(gt), nullptr, w.huber_delta)};
        Tensor r = refinement_loss(pf, field(gt), nullptr, w.huber_delta);
        Tensor o = occlusion_loss({oprob}, {ogt});
        return total_loss(s, &r, &o, w).total;
      },
      {pred, oprob});
  CHECK(err < 1e-4);
}
