#include <doctest.h>

#include "fader/checkpoint.hpp"
#include "fader/losses.hpp"
#include "fader/nn.hpp"
#include "fader/unet.hpp"
#include "testutil.hpp"

using namespace fader;
using namespace fader::nn;

namespace {

BasicTensor<double> random_batch(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0,
                                 double hi = 1.0) {
  auto rng = make_rng(seed);
  BasicTensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rand_uniform(rng, lo, hi);
  return t;
}

// central finite differences of `loss()` w.r.t. every element of `value`
template <typename LossFn>
BasicTensor<double> fd_grad(BasicTensor<double>& value, LossFn loss, double step = 1e-5) {
  BasicTensor<double> g(value.shape());
  for (int64_t i = 0; i < value.numel(); ++i) {
    const double saved = value[i];
    value[i] = saved + step;
    const double up = loss();
    value[i] = saved - step;
    const double down = loss();
    value[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_rel_err(const BasicTensor<double>& a, const BasicTensor<double>& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  auto rng = make_rng(11);
  for (int64_t stride : {int64_t{1}, int64_t{2}}) {
    Conv2d<double> conv("c", 2, 3, stride, rng);
    BasicTensor<double> x = random_batch({2, 2, 6, 6}, 21);
    const BasicTensor<double> target = random_batch(conv.forward(x).shape(), 22);

    const auto loss = [&]() { return static_cast<double>(mse_loss(conv.forward(x), target)); };

    conv.weight.zero_grad();
    conv.bias.zero_grad();
    BasicTensor<double> y = conv.forward(x);
    const BasicTensor<double> dx = conv.backward(mse_loss_grad(y, target));

    CHECK(max_rel_err(conv.weight.grad, fd_grad(conv.weight.value, loss)) < 1e-6);
    CHECK(max_rel_err(conv.bias.grad, fd_grad(conv.bias.value, loss)) < 1e-6);
    CHECK(max_rel_err(dx, fd_grad(x, loss)) < 1e-6);
  }
}

TEST_CASE("batchnorm training-mode gradients match finite differences") {
  BatchNorm2d<double> bn("b", 3);
  auto rng = make_rng(5);
  for (int64_t i = 0; i < 3; ++i) {
    bn.gamma.value[i] = rand_uniform(rng, 0.5, 1.5);
    bn.beta.value[i] = rand_uniform(rng, -0.3, 0.3);
  }
  BasicTensor<double> x = random_batch({2, 3, 4, 4}, 31);
  const BasicTensor<double> target = random_batch({2, 3, 4, 4}, 32);

  const auto loss = [&]() {
    BatchNorm2d<double> probe = bn;  // reset running stats side effects
    return static_cast<double>(mse_loss(probe.forward(x, true), target));
  };

  BatchNorm2d<double> live = bn;
  live.gamma.zero_grad();
  live.beta.zero_grad();
  BasicTensor<double> y = live.forward(x, true);
  const BasicTensor<double> dx = live.backward(mse_loss_grad(y, target));

  CHECK(max_rel_err(live.gamma.grad, fd_grad(bn.gamma.value, loss)) < 1e-5);
  CHECK(max_rel_err(live.beta.grad, fd_grad(bn.beta.value, loss)) < 1e-5);
  CHECK(max_rel_err(dx, fd_grad(x, loss)) < 1e-5);
}

TEST_CASE("batchnorm inference uses running statistics") {
  BatchNorm2d<double> bn("b", 1);
  bn.running_mean[0] = 0.5;
  bn.running_var[0] = 4.0;
  BasicTensor<double> x({1, 1, 1, 2});
  x[0] = 0.5;
  x[1] = 2.5;
  const auto y = bn.forward(x, false);
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-9));
}

TEST_CASE("upsample, activation and sigmoid gradients match finite differences") {
  BasicTensor<double> x = random_batch({2, 2, 3, 3}, 41);
  const BasicTensor<double> target = random_batch({2, 2, 6, 6}, 42);

  NearestUpsample2<double> up;
  LeakyReLU<double> act(0.2);
  Sigmoid<double> sig;
  const auto loss = [&]() {
    return static_cast<double>(mse_loss(sig.forward(act.forward(up.forward(x))), target));
  };
  auto y = sig.forward(act.forward(up.forward(x)));
  const auto dx = up.backward(act.backward(sig.backward(mse_loss_grad(y, target))));
  CHECK(max_rel_err(dx, fd_grad(x, loss)) < 1e-6);
}

TEST_CASE("msgms loss gradient matches finite differences") {
  BasicTensor<double> pred = random_batch({1, 3, 8, 8}, 51, 0.1, 0.9);
  const BasicTensor<double> target = random_batch({1, 3, 8, 8}, 52, 0.1, 0.9);

  MsgmsLoss<double> loss_fn(2);
  const auto loss = [&]() {
    MsgmsLoss<double> probe(2);
    return static_cast<double>(probe.forward(pred, target));
  };
  loss_fn.forward(pred, target);
  const auto grad = loss_fn.backward();
  CHECK(max_rel_err(grad, fd_grad(pred, loss, 1e-6)) < 1e-4);
}

TEST_CASE("concat and split are inverse") {
  const auto a = random_batch({2, 3, 4, 4}, 61);
  const auto b = random_batch({2, 5, 4, 4}, 62);
  const auto y = concat_channels(a, b);
  CHECK(y.shape() == std::vector<int64_t>{2, 8, 4, 4});
  const auto [a2, b2] = split_channels(y, 3);
  CHECK(a2 == a);
  CHECK(b2 == b);
  CHECK_THROWS_AS(concat_channels(a, random_batch({2, 3, 2, 2}, 63)), ShapeError);
}

TEST_CASE("rmsprop steps parameters against the gradient") {
  Param<double> p;
  p.init("p", {2});
  p.value[0] = 1.0;
  p.value[1] = -1.0;
  RmsProp<double> opt;
  opt.attach({&p});
  p.grad[0] = 0.5;
  p.grad[1] = -0.5;
  opt.step(0.1);
  CHECK(p.value[0] < 1.0);
  CHECK(p.value[1] > -1.0);
  // adaptive scaling makes the two steps symmetric
  CHECK(p.value[0] - 1.0 == doctest::Approx(-(p.value[1] + 1.0)).epsilon(1e-12));
}

TEST_CASE("warmup ramps linearly then holds") {
  CHECK(warmup_lr(1.0, 0, 10) == doctest::Approx(0.1));
  CHECK(warmup_lr(1.0, 4, 10) == doctest::Approx(0.5));
  CHECK(warmup_lr(1.0, 10, 10) == 1.0);
  CHECK(warmup_lr(1.0, 50, 10) == 1.0);
  CHECK(warmup_lr(1.0, 3, 0) == 1.0);  // disabled
}

TEST_CASE("scale_mask nearest fills integer blocks and keeps the value set") {
  Tensor grid({4, 4});
  for (int64_t i = 0; i < 16; ++i) grid[i] = static_cast<double>(i) / 15.0;
  const Tensor up = scale_mask(grid, 16, 16, ScalingMode::nearest);
  for (int64_t y = 0; y < 16; ++y)
    for (int64_t x = 0; x < 16; ++x) CHECK(up.at(y, x) == grid.at(y / 4, x / 4));
}

TEST_CASE("scale_mask bilinear interpolates within [0,1]") {
  Tensor grid({2, 2});
  grid.at(0, 0) = 0.0;
  grid.at(0, 1) = 1.0;
  grid.at(1, 0) = 1.0;
  grid.at(1, 1) = 0.0;
  const Tensor up = scale_mask(grid, 4, 4, ScalingMode::bilinear);
  bool has_intermediate = false;
  for (int64_t i = 0; i < up.numel(); ++i) {
    CHECK(up[i] >= 0.0);
    CHECK(up[i] <= 1.0);
    if (up[i] > 0.0 && up[i] < 1.0) has_intermediate = true;
  }
  CHECK(has_intermediate);
  // identity when the target equals the grid size
  CHECK(scale_mask(grid, 2, 2, ScalingMode::bilinear) == grid);
  CHECK(scale_mask(grid, 2, 2, ScalingMode::nearest) == grid);
}

TEST_CASE("scale_mask handles downscaling in both modes") {
  const Tensor grid = testutil::random_tensor({8, 8}, 71);
  for (auto mode : {ScalingMode::nearest, ScalingMode::bilinear}) {
    const Tensor down = scale_mask(grid, 4, 4, mode);
    CHECK(down.shape() == std::vector<int64_t>{4, 4});
    CHECK(tensor_min(down) >= 0.0);
    CHECK(tensor_max(down) <= 1.0);
  }
}

TEST_CASE("checkpoint round-trips tensors and config bit-exactly") {
  testutil::TempDir tmp("ckpt");
  Checkpoint ckpt;
  ckpt.config.set("unet", "depth", "3");
  const Tensor a = testutil::random_tensor({3, 5}, 81, -2.0, 2.0);
  BasicTensor<float> b({7});
  auto rng = make_rng(82);
  for (int64_t i = 0; i < 7; ++i) b[i] = static_cast<float>(rand_uniform(rng, -1, 1));
  ckpt.tensors["a"] = a;
  ckpt.store("b", b);

  ckpt.save(tmp.path() / "x.ckpt");
  const Checkpoint back = Checkpoint::load(tmp.path() / "x.ckpt");
  CHECK(back.tensor("a") == a);
  BasicTensor<float> b2({7});
  back.restore_into("b", b2);
  CHECK(b2 == b);  // float -> double -> float is lossless
  CHECK(back.config.get("unet", "depth") == "3");

  // identical state produces identical bytes
  back.save(tmp.path() / "y.ckpt");
  ckpt.save(tmp.path() / "z.ckpt");
  CHECK(testutil::files_identical(tmp.path() / "y.ckpt", tmp.path() / "z.ckpt"));

  CHECK_THROWS_AS(Checkpoint::load(tmp.path() / "missing.ckpt"), NotFound);
  BasicTensor<float> wrong({3});
  CHECK_THROWS_AS(back.restore_into("b", wrong), ConfigMismatch);
}
