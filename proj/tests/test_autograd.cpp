#include <cmath>

#include "depthkit/autograd.hpp"
#include "gradcheck_cases.hpp"
#include "util.hpp"

using namespace depthkit;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
  return t;
}

Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor y({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < xs.c; ++c)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                const int r = i * stride + ki - pad, q = j * stride + kj - pad;
                if (r >= 0 && r < xs.h && q >= 0 && q < xs.w) s += x.at(n, c, r, q) * w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = s;
        }
  return y;
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("identity 1x1 convolution") {
  Rng rng(1);
  const Tensor x = random_tensor({1, 3, 4, 5}, rng);
  Tensor w({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1;
  Graph g;
  const Var y = conv2d(g, g.constant(x), g.constant(w), g.constant(Tensor({1, 3, 1, 1})), 1, 0);
  CHECK(g.value(y).values() == x.values());
}

TEST_CASE("3x3 box sum on a constant image") {
  Graph g;
  const Var y = conv2d(g, g.constant(Tensor({1, 1, 5, 5}, 1)), g.constant(Tensor({1, 1, 3, 3}, 1)), std::nullopt, 1, 1);
  CHECK(g.value(y).at(0, 0, 2, 2) == 9);
  CHECK(g.value(y).at(0, 0, 0, 0) == 4);
}

TEST_CASE("conv2d matches a loop-nest reference") {
  Rng rng(7);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      const Tensor x = random_tensor({2, 3, 7, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng),
                   b = random_tensor({1, 4, 1, 1}, rng);
      Graph g;
      const Var y = conv2d(g, g.constant(x), g.constant(w), g.constant(b), stride, pad);
      const Tensor ref = conv_reference(x, w, b, stride, pad);
      REQUIRE(g.value(y).shape() == ref.shape());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(g.value(y)[i] - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("conv2d shape errors") {
  Graph g;
  const Var x = g.constant(Tensor({1, 2, 4, 4}));
  CHECK_THROWS_CODE(conv2d(g, x, g.constant(Tensor({1, 3, 3, 3})), std::nullopt, 1, 0), ErrorCode::ShapeMismatch);
  CHECK_THROWS_CODE(conv2d(g, x, g.constant(Tensor({1, 2, 5, 5})), std::nullopt, 1, 0), ErrorCode::ShapeMismatch);
}

TEST_CASE("transpose convolution scatters each input pixel") {
  Tensor x({1, 1, 2, 2});
  x.at(0, 0, 1, 0) = 2;
  Tensor w({1, 1, 2, 2});
  w.at(0, 0, 0, 0) = 1;
  w.at(0, 0, 0, 1) = 2;
  w.at(0, 0, 1, 0) = 3;
  w.at(0, 0, 1, 1) = 4;
  Graph g;
  const Tensor& y = g.value(transpose_conv2d(g, g.constant(x), g.constant(w), std::nullopt, 2));
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  CHECK(y.at(0, 0, 2, 0) == 2);
  CHECK(y.at(0, 0, 2, 1) == 4);
  CHECK(y.at(0, 0, 3, 0) == 6);
  CHECK(y.at(0, 0, 3, 1) == 8);
  CHECK(y.at(0, 0, 0, 0) == 0);
}

TEST_CASE("max pooling then unpooling a one-hot recovers it") {
  Tensor x({1, 2, 4, 4});
  x.at(0, 1, 2, 3) = 5;
  Graph g;
  const Var xv = g.constant(x);
  const PoolResult p = maxpool2d(g, xv);
  const Var u = max_unpool2d(g, p.out, p.indices, x.shape());
  CHECK(g.value(u).values() == x.values());
}

TEST_CASE("unpooling preserves mass and pooling keeps window maxima") {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 6, 8}, rng);
  Graph g;
  const PoolResult p = maxpool2d(g, g.constant(x));
  const Tensor pv = g.value(p.out);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
          double m = -1e9;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) m = std::max(m, x.at(n, c, 2 * i + a, 2 * j + b));
          CHECK(pv.at(n, c, i, j) == m);
        }
  const Var u = max_unpool2d(g, p.out, p.indices, x.shape());
  double s_in = 0, s_out = 0;
  for (double v : pv.values()) s_in += v;
  for (double v : g.value(u).values()) s_out += v;
  CHECK(s_out == doctest::Approx(s_in).epsilon(1e-12));
  // projection: pooling the unpooled tensor gives the same maxima
  const PoolResult again = maxpool2d(g, u);
  for (std::size_t i = 0; i < pv.size(); ++i) CHECK((pv[i] <= 0 || g.value(again.out)[i] == pv[i]));
}

TEST_CASE("pool ties go to the lowest index") {
  Graph g;
  const PoolResult p = maxpool2d(g, g.constant(Tensor({1, 1, 2, 2}, 1)));
  CHECK(p.indices.index[0] == 0);
  Graph h;
  Parameter x{"x", Tensor({1, 1, 2, 2}, 1), {}};
  const PoolResult q = maxpool2d(h, h.param(x));
  h.backward(sum(h, q.out));
  CHECK(h.grad(h.param(x)).size() == 4);
  CHECK(x.grad[0] == 1);
  CHECK(x.grad[1] == 0);
}

TEST_CASE("unpool rejects bad indices") {
  Graph g;
  PoolIndices idx;
  idx.input_shape = {1, 1, 2, 2};
  idx.output_shape = {1, 1, 1, 1};
  idx.index = {9};
  CHECK_THROWS_CODE(max_unpool2d(g, g.constant(Tensor({1, 1, 1, 1}, 1)), idx, {1, 1, 2, 2}), ErrorCode::BadIndices);
}

TEST_CASE("backward basics") {
  Parameter x{"x", Tensor({1, 2, 2, 2}, 0.5), {}};
  {
    Graph g;
    g.backward(sum(g, g.param(x)));
    for (double v : x.grad.values()) CHECK(v == 1);
  }
  {
    x.grad = Tensor();
    Graph g;
    g.backward(scale(g, sum(g, relu(g, g.param(x))), 0.0));
    for (double v : x.grad.values()) CHECK(v == 0);
  }
  Graph g;
  CHECK_THROWS_CODE(g.backward(g.param(x)), ErrorCode::NotScalarLoss);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(5);
  Parameter x{"x", random_tensor({1, 1, 4, 4}, rng), {}};
  const Tensor t1 = random_tensor({1, 1, 4, 4}, rng), t2 = random_tensor({1, 1, 4, 4}, rng);
  const Tensor all(Shape{1, 1, 4, 4}, 1);
  auto grad_of = [&](int which) {
    Parameter* ps[] = {&x};
    zero_grad(ps);
    Graph g;
    const Var xv = g.param(x);
    const Var a = distance(g, {DistanceKind::L2, 1}, xv, g.constant(t1), all);
    const Var b = mean(g, laplacian_energy(g, xv));
    g.backward(which == 0 ? a : which == 1 ? b : add(g, a, b));
    return x.grad;
  };
  const Tensor ga = grad_of(0), gb = grad_of(1), gab = grad_of(2);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(gab[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("non-finite values are rejected") {
  Tensor bad({1, 1, 1, 2}, 1);
  bad[1] = std::nan("");
  Graph g;
  CHECK_THROWS_CODE(relu(g, g.constant(bad)), ErrorCode::NonFinite);
  Tensor huge({1, 1, 1, 1}, 1e308);
  CHECK_THROWS_CODE(scale(g, g.constant(huge), 1e10), ErrorCode::NonFinite);
}

TEST_CASE("every op passes the gradient check") {
  for (const auto& c : gradcases::op_cases()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const double err = c.run(seed);
      CHECK_MESSAGE(err < 1e-6, c.name << " seed " << seed << " error " << err);
    }
  }
}

TEST_CASE("full model with the composite loss passes the gradient check") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (bool unpool : {true, false}) {
      const double err = gradcases::model_case(seed, unpool);
      CHECK_MESSAGE(err < 1e-4, "seed " << seed << " unpool " << unpool << " error " << err);
    }
  }
}

TEST_CASE("single conv layer with L2 loss has error below 1e-6") {
  Rng rng(2);
  Parameter w{"w", random_tensor({2, 1, 3, 3}, rng), {}};
  const Tensor x = random_tensor({1, 1, 6, 6}, rng), t = random_tensor({1, 2, 6, 6}, rng);
  Parameter* ps[] = {&w};
  const double err = grad_check(
      [&](Graph& g) {
        return distance(g, {DistanceKind::L2, 1}, conv2d(g, g.constant(x), g.param(w), std::nullopt, 1, 1), g.constant(t),
                        Tensor(t.shape(), 1));
      },
      ps);
  CHECK(err < 1e-6);
}

TEST_CASE("distance values") {
  Graph g;
  Tensor a({1, 1, 1, 3}), b({1, 1, 1, 3}), m({1, 1, 1, 3}, 1);
  a[0] = 1, a[1] = -1, a[2] = 7;
  m[2] = 0;
  const Var av = g.constant(a), bv = g.constant(b);
  CHECK(g.value(distance(g, {DistanceKind::L1, 1}, av, bv, m))[0] == 1.0);
  for (auto k : {DistanceKind::L1, DistanceKind::L2, DistanceKind::Huber, DistanceKind::AdaptiveHuber, DistanceKind::RHuber})
    CHECK(g.value(distance(g, {k, 1}, av, av, m))[0] == 0.0);

  Tensor e({1, 1, 1, 2});
  e[0] = 0.1, e[1] = 1.0;
  const Var ev = g.constant(e), zero = g.constant(Tensor({1, 1, 1, 2}));
  CHECK(g.value(distance(g, {DistanceKind::RHuber, 1}, ev, zero, Tensor({1, 1, 1, 2}, 1)))[0] ==
        doctest::Approx(1.35).epsilon(1e-12));
  CHECK_THROWS_CODE(distance(g, {DistanceKind::L1, 1}, ev, zero, Tensor({1, 1, 1, 2})), ErrorCode::NoValidPixels);
}

TEST_CASE("Huber and berHu formulas") {
  Graph g;
  Tensor e({1, 1, 1, 2});
  e[0] = 0.5, e[1] = -3.0;
  const Var ev = g.constant(e), zero = g.constant(Tensor({1, 1, 1, 2}));
  const Tensor all({1, 1, 1, 2}, 1);
  // delta 1: 0.125 and 1 * (3 - 0.5)
  CHECK(g.value(distance(g, {DistanceKind::Huber, 1}, ev, zero, all))[0] == doctest::Approx((0.125 + 2.5) / 2));
  // adaptive: delta = median(0.5, 3) = 1.75
  CHECK(g.value(distance(g, {DistanceKind::AdaptiveHuber, 1}, ev, zero, all))[0] ==
        doctest::Approx((0.125 + 1.75 * (3 - 0.875)) / 2));
  // berHu equals L1 when every |e| <= c; continuity at |e| = c
  Tensor f({1, 1, 1, 2});
  f[0] = 0.2, f[1] = 1.0;  // c = 0.2
  const double l1 = g.value(distance(g, {DistanceKind::L1, 1}, g.constant(f), zero, all))[0];
  const double bh = g.value(distance(g, {DistanceKind::RHuber, 1}, g.constant(f), zero, all))[0];
  CHECK(bh == doctest::Approx((0.2 + (1.0 + 0.04) / 0.4) / 2));
  CHECK(l1 == doctest::Approx(0.6));
}

TEST_CASE("distance is symmetric for L1, L2 and Huber") {
  Rng rng(4);
  const Tensor a = random_tensor({1, 2, 3, 3}, rng), b = random_tensor({1, 2, 3, 3}, rng);
  const Tensor m(a.shape(), 1);
  Graph g;
  for (auto k : {DistanceKind::L1, DistanceKind::L2, DistanceKind::Huber}) {
    const double ab = g.value(distance(g, {k, 0.3}, g.constant(a), g.constant(b), m))[0];
    const double ba = g.value(distance(g, {k, 0.3}, g.constant(b), g.constant(a), m))[0];
    CHECK(ab == doctest::Approx(ba).epsilon(1e-15));
    CHECK(ab > 0);
  }
}

TEST_CASE("optimizers") {
  Parameter p{"p", Tensor({1, 1, 1, 3}, 0.7), {}};
  Parameter* ps[] = {&p};
  zero_grad(ps);
  sgd_step(ps, 0.1);
  CHECK(p.value[0] == 0.7);
  AdamState st;
  adam_step(st, ps, 0.1);
  CHECK(p.value[0] == 0.7);

  // (x - 3)^2
  auto quad_grad = [](Parameter& q) { q.grad = Tensor(q.value.shape(), 2 * (q.value[0] - 3)); };
  Parameter x{"x", Tensor({1, 1, 1, 1}, 0.0), {}};
  Parameter* xs[] = {&x};
  for (int i = 0; i < 200; ++i) {
    quad_grad(x);
    sgd_step(xs, 0.1);
  }
  CHECK(std::abs(x.value[0] - 3) < 1e-6);

  Parameter y{"y", Tensor({1, 1, 1, 1}, 0.0), {}};
  Parameter* ys[] = {&y};
  AdamState adam;
  for (int i = 0; i < 500; ++i) {
    quad_grad(y);
    adam_step(adam, ys, 0.1);
  }
  CHECK(std::abs(y.value[0] - 3) < 1e-3);

  // decoupled weight decay shrinks the weights with zero gradient
  Parameter z{"z", Tensor({1, 1, 1, 1}, 1.0), {}};
  Parameter* zs[] = {&z};
  zero_grad(zs);
  sgd_step(zs, 0.1, 0.5);
  CHECK(z.value[0] == doctest::Approx(0.95));
}

}
