#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stereo/adam.hpp"
#include "stereo/gradcheck.hpp"
#include "stereo/tensor.hpp"
#include "oracles.hpp"

using namespace stereo;

TEST_CASE("construction and invariants") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("loss = sum(w*x) has d loss/dw = x") {
  Tensor w = Tensor::from({4}, {0.5, -1, 2, 3}, true);
  Tensor x = Tensor::from({4}, {1, 2, 3, 4});
  Tensor loss = sum(mul(w, x));
  backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(w.grad()[size_t(i)] == doctest::Approx(x.values()[size_t(i)]));
  // grad of loss w.r.t. itself is 1
  CHECK(loss.grad()[0] == 1.0);
}

TEST_CASE("disconnected parameter grad stays absent") {
  Tensor w = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {5, 5}, true);
  Tensor loss = sum(w);
  backward(loss);
  CHECK(w.has_grad());
  CHECK(!unused.has_grad());
}

TEST_CASE("backward rejects non-scalar loss and double backward") {
  Tensor w = Tensor::from({2}, {1, 2}, true);
  Tensor y = scale(w, 2);
  CHECK_THROWS_AS(backward(y), std::logic_error);
  Tensor loss = sum(y);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), std::logic_error);
}

TEST_CASE("activations") {
  Tensor x = Tensor::from({3}, {-1, 0, 2});
  Tensor r = relu(x);
  CHECK(r.values() == std::vector<real>{0, 0, 2});
  Tensor s = sigmoid(Tensor::from({1}, {0}));
  CHECK(s.values()[0] == doctest::Approx(0.5));
}

TEST_CASE("softmax basics") {
  Tensor u = softmax_axis(Tensor::from({4}, {3, 3, 3, 3}), 0);
  for (real v : u.values()) CHECK(v == doctest::Approx(0.25));

  Tensor hot = softmax_axis(Tensor::from({4}, {0, 1000, 0, 0}), 0);
  CHECK(hot.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hot.values()[0] <= 1e-12);

  // sums to 1 along axis for random input, any axis
  Rng rng(3);
  Tensor x = oracle::random_tensor({2, 5, 3}, rng, -50, 50);
  Tensor y = softmax_axis(x, 1);
  for (int n = 0; n < 2; ++n)
    for (int j = 0; j < 3; ++j) {
      real s = 0;
      for (int k = 0; k < 5; ++k) s += y.values()[size_t((n * 5 + k) * 3 + j)];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("elementwise and concat semantics") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(abs_diff(a, a).values() == std::vector<real>{0, 0, 0, 0});
  Tensor b = Tensor::from({2, 3}, {9, 9, 9, 9, 9, 9});
  Tensor c = concat({a, b}, 1);
  CHECK(c.shape() == std::vector<int>{2, 5});
  CHECK(c.values() == std::vector<real>{1, 2, 9, 9, 9, 3, 4, 9, 9, 9});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  Tensor n = narrow(c, 1, 2, 3);
  CHECK(n.values() == b.values());
}

TEST_CASE("gradcheck: elementwise, softmax, concat, narrow") {
  Rng rng(11);
  Tensor a = oracle::random_tensor({3, 4}, rng);
  Tensor b = oracle::random_tensor({3, 4}, rng);
  CHECK(gradcheck_max_rel_error([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b}) <
        1e-6);
  CHECK(gradcheck_max_rel_error([&] { return sum(mul(abs_diff(a, b), abs_diff(a, b))); },
                                {a, b}) < 1e-6);
  Tensor c = oracle::random_tensor({3, 2}, rng);
  CHECK(gradcheck_max_rel_error(
            [&] {
              Tensor cc = concat({a, c}, 1);
              return sum(mul(cc, cc));
            },
            {a, c}) < 1e-6);
  Tensor x = oracle::random_tensor({2, 5, 3}, rng, -2, 2);
  Tensor probe = oracle::random_tensor({2, 5, 3}, rng);
  CHECK(gradcheck_max_rel_error([&] { return sum(mul(softmax_axis(x, 1), probe)); }, {x}) <
        1e-5);
  CHECK(gradcheck_max_rel_error([&] { return sum(mul(narrow(x, 1, 1, 3), Tensor::full({2, 3, 3}, 0.7))); },
                                {x}) < 1e-6);
  CHECK(gradcheck_max_rel_error([&] { return mean(sigmoid(relu(x))); }, {x}) < 1e-5);
}

TEST_CASE("adam: first step magnitude and zero grad") {
  Tensor w = Tensor::from({3}, {1, 1, 1}, true);
  w.grad() = {0.3, -2.0, 0.0};
  std::vector<Tensor> params{w};
  AdamState st;
  st.lr = real(0.1);
  adam_step(params, st);
  CHECK(st.step == 1);
  // first bias-corrected step is ~ -lr * sign(g)
  CHECK(w.values()[0] == doctest::Approx(1 - 0.1).epsilon(1e-6));
  CHECK(w.values()[1] == doctest::Approx(1 + 0.1).epsilon(1e-6));
  CHECK(w.values()[2] == doctest::Approx(1.0));  // zero grad, no movement
}

TEST_CASE("adam: converges on quadratic") {
  Tensor x = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> params{x};
  AdamState st;
  st.lr = real(0.1);
  for (int i = 0; i < 100; ++i) {
    x.zero_grad();
    Tensor loss = sum(mul(x, x));
    backward(loss);
    adam_step(params, st);
  }
  CHECK(std::abs(x.values()[0]) < 0.05);
}

TEST_CASE("adam: missing grad is a state error") {
  Tensor w = Tensor::from({2}, {1, 2}, true);
  std::vector<Tensor> params{w};
  AdamState st;
  CHECK_THROWS_AS(adam_step(params, st), std::logic_error);
}
