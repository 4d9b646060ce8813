#include <doctest.h>

#include <cmath>
#include <vector>

#include "faultarm/nn.hpp"

using namespace faultarm;
using namespace faultarm::nn;

namespace {

Tensor random_tensor(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("gelu values") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(std::abs(gelu(10.0) - 10.0) < 1e-6);
  // Scalar evaluation of the tanh form done independently.
  CHECK(gelu(1.0) == doctest::Approx(0.8411919906082768).epsilon(1e-15));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15880800939172324).epsilon(1e-14));
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("l1 loss of a half chunk") {
  const Tensor pred = Tensor::Zero(32, 1);
  const Tensor target = Tensor::Constant(32, 1, 0.5);
  CHECK(l1_loss(pred, target) == 0.5);
  const Tensor g = l1_loss_grad(pred, target);
  CHECK(g(0, 0) == -1.0 / 32);
  CHECK(l1_loss_grad(target, target).isZero());
}

TEST_CASE("dense and residual gradients match central differences") {
  Rng rng(3);
  ResidualBlock block(5, 7);
  block.inner.init_scaled_normal(rng);
  block.outer.init_scaled_normal(rng);
  block.outer.bias = random_tensor(rng, 5, 1);
  const Tensor x = random_tensor(rng, 5, 3);
  const Tensor target = random_tensor(rng, 5, 3);

  auto loss = [&](const ResidualBlock& b, const Tensor& in) { return l1_loss(b.forward(in), target); };
  ResidualBlock::Cache cache;
  const Tensor y = block.forward(x, &cache);
  ResidualBlock grad(5, 7);
  const Tensor dx = block.backward(cache, l1_loss_grad(y, target), grad);

  const double h = 1e-5;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(block, xp) - loss(block, xm)) / (2 * h);
    CHECK(dx.data()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (Eigen::Index i = 0; i < block.inner.weight.size(); ++i) {
    ResidualBlock p = block, m = block;
    p.inner.weight.data()[i] += h;
    m.inner.weight.data()[i] -= h;
    const double fd = (loss(p, x) - loss(m, x)) / (2 * h);
    CHECK(grad.inner.weight.data()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("single AdamW step on a scalar") {
  Tensor theta = Tensor::Constant(1, 1, 1.0);
  Tensor g = Tensor::Constant(1, 1, 1.0);
  std::vector<Tensor*> params{&theta}, grads{&g};
  AdamWState state = AdamWState::like(params);
  const AdamWConfig cfg;
  adamw_step(params, grads, state, cfg, cfg.lr);
  // m_hat = v_hat = 1 after bias correction; step = lr (1/(1+eps) + wd * theta).
  CHECK(theta(0, 0) == doctest::Approx(0.999798000002).epsilon(1e-14));
  CHECK(state.step == 1);
}

TEST_CASE("AdamW without gradient or decay leaves parameters alone") {
  Rng rng(1);
  Tensor theta = random_tensor(rng, 3, 2);
  const Tensor before = theta;
  Tensor g = Tensor::Zero(3, 2);
  std::vector<Tensor*> params{&theta}, grads{&g};
  AdamWState state = AdamWState::like(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_step(params, grads, state, cfg, 1e-2);
  CHECK(theta == before);
}

TEST_CASE("global norm clipping is joint over all tensors") {
  Tensor a(1, 2), b(2, 1);
  a << 1.2, 0.0;
  b << 0.0, 1.6;  // joint norm 2
  std::vector<Tensor*> grads{&a, &b};
  CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(2.0));
  CHECK(global_norm(grads) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a(0, 0) == doctest::Approx(0.6));

  Tensor c(1, 1);
  c << 0.5;
  std::vector<Tensor*> small{&c};
  clip_global_norm(small, 1.0);
  CHECK(c(0, 0) == 0.5);

  Rng rng(2);
  Tensor x = random_tensor(rng, 4, 3), y = random_tensor(rng, 5, 1);
  std::vector<double> flat(x.data(), x.data() + x.size());
  flat.insert(flat.end(), y.data(), y.data() + y.size());
  double sq = 0.0;
  for (double v : flat) sq += v * v;
  std::vector<Tensor*> xy{&x, &y};
  CHECK(global_norm(xy) == doctest::Approx(std::sqrt(sq)).epsilon(1e-15));

  const Tensor x0 = 3.0 * x, y0 = 3.0 * y;
  x = x0;
  y = y0;
  REQUIRE(clip_global_norm(xy, 1.0) > 1.0);
  const double dot = (x.cwiseProduct(x0)).sum() + (y.cwiseProduct(y0)).sum();
  const double cosine = dot / (global_norm(xy) * std::sqrt(x0.squaredNorm() + y0.squaredNorm()));
  CHECK(std::abs(cosine - 1.0) <= 1e-12);
}

TEST_CASE("learning rate schedule") {
  CHECK(lr_at(0, 2e-4, 500, 10000) == 0.0);
  CHECK(lr_at(250, 2e-4, 500, 10000) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(500, 2e-4, 500, 10000) == 2e-4);
  CHECK(lr_at(9999, 2e-4, 500, 10000) == 2e-4);
  CHECK(lr_at(10000, 2e-4, 500, 10000) == doctest::Approx(2e-5).epsilon(1e-15));
  CHECK(lr_at(5, 1e-3, 0, 100) == 1e-3);
}

TEST_CASE("tensor dump round trip checks names, shapes and hash") {
  Rng rng(4);
  Tensor a = random_tensor(rng, 2, 3), b = random_tensor(rng, 4, 1);
  const std::vector<ConstNamedTensor> out{{"a", &a}, {"b", &b}};
  const auto j = tensors_to_json(out);

  Tensor a2(2, 3), b2(4, 1);
  const std::vector<NamedTensor> in{{"a", &a2}, {"b", &b2}};
  tensors_from_json(j, in);
  CHECK(a2 == a);
  CHECK(b2 == b);

  auto tampered = j;
  tampered["tensors"][0]["data"][0] = 123.0;
  CHECK_THROWS(tensors_from_json(tampered, in));

  Tensor wrong(3, 3);
  const std::vector<NamedTensor> bad{{"a", &wrong}, {"b", &b2}};
  CHECK_THROWS(tensors_from_json(j, bad));
}
