#include <doctest.h>

#include <cmath>

#include "vidcorr/rng.hpp"
#include "vidcorr/tensor.hpp"

using namespace vidcorr;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("softmax of a symmetric pair is uniform") {
  Tensor x = Tensor::from_data({2}, {0.0, 0.0});
  Tensor y = softmax_lastdim(x);
  CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and survive large magnitudes") {
  Rng rng(1);
  Tensor x = random_tensor({16, 9}, rng, -1e4, 1e4);
  Tensor y = softmax_lastdim(x);
  for (int r = 0; r < 16; ++r) {
    double s = 0.0;
    for (int j = 0; j < 9; ++j) s += y.data()[r * 9 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("l1_diff of a tensor with itself sums to zero") {
  Rng rng(2);
  Tensor x = random_tensor({4, 3}, rng);
  CHECK(sum(l1_diff(x, x)).value() == 0.0);
}

TEST_CASE("matmul by identity is the identity") {
  Rng rng(3);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]));
}

TEST_CASE("backward of sum fills ones") {
  ComputationRecord record;
  RecordingScope scope(record);
  Tensor x = Tensor::from_data({4}, {1.0, -2.0, 3.0, 0.5}, true);
  Tensor y = sum(x);
  record.backward(y);
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of mean of squares is x for two elements") {
  // d/dx mean(x^2) = 2x/n = x at n=2; hand evaluation gives [1, 2].
  ComputationRecord record;
  RecordingScope scope(record);
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = mean(mul(x, x));
  record.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("softmax pick-first gradient at a tie is +/- 0.25") {
  ComputationRecord record;
  RecordingScope scope(record);
  Tensor x = Tensor::from_data({2}, {0.3, 0.3}, true);
  Tensor y = sum(slice(softmax_lastdim(x), 0, 0, 1));
  record.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across backward calls") {
  ComputationRecord record;
  RecordingScope scope(record);
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tensor y = sum(mul(x, x));
  record.backward(y);
  std::vector<double> once(x.grad().begin(), x.grad().end());
  record.backward(y);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
  }
  // Idempotent after clearing.
  x.zero_grad();
  record.backward(y);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(once[i]).epsilon(1e-12));
  }
}

TEST_CASE("backpropagate rejects non-scalar and detached roots") {
  ComputationRecord record;
  RecordingScope scope(record);
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(record.backward(y), ShapeError);
  Tensor c = Tensor::from_data({1}, {3.0});  // no grad anywhere
  CHECK_THROWS_AS(backpropagate(c), ShapeError);
}

TEST_CASE("shape errors name the op and shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
}

TEST_CASE("non-finite op output surfaces as a numeric fault") {
  Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
  CHECK_THROWS_AS(log(x), NumericFault);
  Tensor z = Tensor::from_data({3}, {0.0, 1.0, 0.0});
  CHECK_THROWS_AS(l2_normalize_lastdim(reshape(z, {3, 1})), NumericFault);
}

TEST_CASE("finite differences accept sum exactly") {
  Rng rng(4);
  Tensor x = random_tensor({5}, rng);
  auto report = finite_difference_check([](const Tensor& t) { return sum(t); }, x, 1e-5);
  CHECK(report.max_rel_err <= 1e-10);
}

TEST_CASE("finite difference harness validates eps and scalar outputs") {
  Tensor x = Tensor::zeros({2});
  CHECK_THROWS_AS(
      finite_difference_check([](const Tensor& t) { return sum(t); }, x, 0.5),
      std::invalid_argument);
  CHECK_THROWS_AS(
      finite_difference_check([](const Tensor& t) { return mul(t, t); }, x, 1e-5),
      ShapeError);
}

TEST_CASE("per-op gradients match finite differences") {
  Rng rng(5);
  auto check = [&](const char* name, Shape shape, auto op, double lo = -1.0, double hi = 1.0) {
    Tensor x = random_tensor(shape, rng, lo, hi);
    Tensor w = random_tensor(shape, rng);
    auto f = [&](const Tensor& t) { return sum(mul(op(t), w)); };
    auto report = finite_difference_check(f, x, 1e-5);
    INFO(name);
    CHECK(report.max_rel_err <= 1e-4);
  };
  check("relu", {6, 4}, [](const Tensor& t) { return relu(t); });
  check("exp", {6, 4}, [](const Tensor& t) { return exp(t); });
  check("log", {6, 4}, [](const Tensor& t) { return log(t); }, 0.4, 1.6);
  check("softmax", {6, 4}, [](const Tensor& t) { return softmax_lastdim(t); });
  check("l2norm", {6, 4}, [](const Tensor& t) { return l2_normalize_lastdim(t); }, 0.3, 1.0);
}

TEST_CASE("concat and slice are exact inverses over an axis") {
  Rng rng(6);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 2}, rng);
  const Tensor parts[] = {a, b};
  Tensor joined = concat(parts, 1);
  CHECK(joined.shape() == Shape{2, 5});
  Tensor a2 = slice(joined, 1, 0, 3);
  Tensor b2 = slice(joined, 1, 3, 2);
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(a2.data()[i] == a.data()[i]);
  for (std::size_t i = 0; i < b.data().size(); ++i) CHECK(b2.data()[i] == b.data()[i]);
}

TEST_CASE("conv2d shape rule and identity kernel") {
  Tensor x = Tensor::from_data({4, 4, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11,
                                                              12, 13, 14, 15, 16});
  // 1x1 kernel, stride 1: output equals input.
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < y.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);

  Tensor w3 = Tensor::zeros({3, 3, 1, 2});
  Tensor b3 = Tensor::zeros({2});
  Tensor y3 = conv2d(x, w3, b3, 2, 1);
  CHECK(y3.shape() == Shape{2, 2, 2});
}
