#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lqg/nn_ops.hpp"
#include "lqg/rng.hpp"
#include "lqg/tensor.hpp"
#include "support/fd.hpp"

using namespace lqg;
using T = ad::Tensor<double>;

namespace {

T random_leaf(ad::Shape shape, RngStream& rng, const std::string& name = "x") {
  auto t = T::leaf(std::move(shape), true, name);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()(i) = rng.normal();
  return t;
}

// Freezes random scalarization weights for an op's output (drawn once, so
// the loss is the same function on every FD probe).
std::function<T()> weighted(std::function<T()> op, RngStream& rng) {
  auto w = T::leaf(op().shape(), false, "w");
  for (Eigen::Index i = 0; i < w.size(); ++i) w.values()(i) = rng.normal();
  return [op = std::move(op), w] { return ad::sum(ad::mul(op(), w)); };
}

void check_fd(std::vector<T> params, const std::function<T()>& loss_graph,
              double tol = 1e-6) {
  auto loss = loss_graph();
  for (auto& p : params) p.zero_grad();
  ad::backward(loss, std::span<T>(params));
  auto fd = test::fd_gradients<double>(
      params, [&] { return loss_graph().item(); }, 1e-5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double err = test::max_rel_err<double>(params[i].grad(), fd[i]);
    INFO("param ", i, " max rel err ", err);
    CHECK(err < tol);
  }
}

}  // namespace

TEST_CASE("sum of squares gradient is analytic") {
  auto x = T::leaf({3}, true);
  x.values() << 1, 2, 3;
  auto loss = ad::sum(ad::mul(x, x));
  std::vector<T> params{x};
  ad::backward(loss, std::span<T>(params));
  CHECK(x.grad()(0) == doctest::Approx(2).epsilon(1e-14));
  CHECK(x.grad()(1) == doctest::Approx(4).epsilon(1e-14));
  CHECK(x.grad()(2) == doctest::Approx(6).epsilon(1e-14));
}

TEST_CASE("constant loss leaves zero gradients") {
  auto x = T::leaf({4}, true);
  x.values().setConstant(2.0);
  auto loss = T::scalar(5.0);
  std::vector<T> params{x};
  ad::backward(loss, std::span<T>(params));
  CHECK((x.grad() == 0.0).all());
}

TEST_CASE("gradient accumulators reset to exact zero") {
  auto x = T::leaf({2}, true);
  x.values() << 1, 1;
  auto loss = ad::sum(ad::mul(x, x));
  std::vector<T> params{x};
  ad::backward(loss, std::span<T>(params));
  CHECK(x.grad()(0) != 0.0);
  x.zero_grad();
  CHECK(x.grad()(0) == 0.0);
  CHECK(x.grad()(1) == 0.0);
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  auto a = T::leaf({2, 3}, true);
  auto b = T::leaf({3, 3}, true);
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("add"), ad::ShapeError);
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("[2,3]"), ad::ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), ad::ShapeError);
}

TEST_CASE("three-layer MLP gradients match finite differences") {
  RngStream rng(101, "mlp-fd");
  for (int trial = 0; trial < 3; ++trial) {
    auto x = random_leaf({4, 6}, rng, "x");
    auto w1 = random_leaf({6, 8}, rng, "w1");
    auto b1 = random_leaf({8}, rng, "b1");
    auto w2 = random_leaf({8, 5}, rng, "w2");
    auto b2 = random_leaf({5}, rng, "b2");
    auto w3 = random_leaf({5, 2}, rng, "w3");
    auto b3 = random_leaf({2}, rng, "b3");
    auto graph = [&] {
      auto h1 = ad::tanh(ad::add_rowvec(ad::matmul(x, w1), b1));
      auto h2 = ad::leaky_relu(ad::add_rowvec(ad::matmul(h1, w2), b2), 0.2);
      auto out = ad::add_rowvec(ad::matmul(h2, w3), b3);
      return ad::mean(ad::square(out));
    };
    check_fd({x, w1, b1, w2, b2, w3, b3}, graph);
  }
}

TEST_CASE("primitive gradient checks at three shapes each") {
  RngStream rng(202, "prim-fd");

  SUBCASE("matmul") {
    for (auto [m, k, n] : {std::array<int, 3>{2, 3, 4}, {1, 5, 2}, {4, 4, 4}}) {
      auto a = random_leaf({m, k}, rng), b = random_leaf({k, n}, rng);
      check_fd({a, b}, weighted([&] { return ad::matmul(a, b); }, rng));
    }
  }
  SUBCASE("tanh / leaky_relu / sigmoid / exp / sqrt / log") {
    for (auto shape : {ad::Shape{7}, ad::Shape{3, 5}, ad::Shape{2, 2}}) {
      auto x = random_leaf(shape, rng);
      check_fd({x}, weighted([&] { return ad::tanh(x); }, rng));
      check_fd({x}, weighted([&] { return ad::leaky_relu(x, 0.2); }, rng));
      check_fd({x}, weighted([&] { return ad::sigmoid(x); }, rng));
      check_fd({x}, weighted([&] { return ad::exp(x); }, rng));
      auto pos = T::leaf(shape, true);
      for (Eigen::Index i = 0; i < pos.size(); ++i) pos.values()(i) = 0.5 + rng.uniform();
      check_fd({pos}, weighted([&] { return ad::sqrt(pos); }, rng));
      check_fd({pos}, weighted([&] { return ad::log(pos); }, rng));
    }
  }
  SUBCASE("sum / mean / l2norm / rownorm") {
    for (auto shape : {ad::Shape{9}, ad::Shape{4, 3}, ad::Shape{2, 6}}) {
      auto x = random_leaf(shape, rng);
      check_fd({x}, [&] { return ad::sum(x); });
      check_fd({x}, [&] { return ad::mean(ad::square(x)); });
      check_fd({x}, [&] { return ad::l2norm(x); });
    }
    auto x = random_leaf({5, 4}, rng);
    check_fd({x}, weighted([&] { return ad::rownorm(x); }, rng));
  }
  SUBCASE("row/col broadcast ops") {
    auto x = random_leaf({4, 6}, rng);
    auto b = random_leaf({6}, rng);
    auto s = random_leaf({4}, rng);
    check_fd({x, b}, weighted([&] { return ad::add_rowvec(x, b); }, rng));
    check_fd({x, b}, weighted([&] { return ad::mul_rowvec(x, b); }, rng));
    check_fd({x, s}, weighted([&] { return ad::scale_rows(x, s); }, rng));
  }
  SUBCASE("div and elementwise mul") {
    auto a = random_leaf({3, 4}, rng);
    auto b = T::leaf({3, 4}, true);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.values()(i) = 1.0 + rng.uniform();
    check_fd({a, b}, weighted([&] { return ad::div(a, b); }, rng));
    check_fd({a, b}, weighted([&] { return ad::mul(a, b); }, rng));
  }
  SUBCASE("conv2d") {
    struct Case { int b, c, h, k, co, s, p; };
    for (auto cs : {Case{2, 3, 6, 3, 4, 1, 1}, Case{1, 2, 8, 4, 3, 2, 1},
                    Case{3, 1, 5, 3, 2, 2, 0}}) {
      auto x = random_leaf({cs.b, cs.c, cs.h, cs.h}, rng);
      auto w = random_leaf({cs.co, cs.c, cs.k, cs.k}, rng);
      check_fd({x, w}, weighted([&] { return ad::conv2d(x, w, cs.s, cs.p); }, rng), 2e-6);
    }
  }
  SUBCASE("conv_transpose2d") {
    struct Case { int b, c, h, k, co, s, p; };
    for (auto cs : {Case{2, 3, 4, 3, 2, 1, 1}, Case{1, 4, 3, 4, 2, 2, 1},
                    Case{2, 2, 5, 3, 3, 2, 0}}) {
      auto x = random_leaf({cs.b, cs.c, cs.h, cs.h}, rng);
      auto w = random_leaf({cs.c, cs.co, cs.k, cs.k}, rng);
      check_fd({x, w}, weighted([&] { return ad::conv_transpose2d(x, w, cs.s, cs.p); }, rng),
               2e-6);
    }
  }
  SUBCASE("batchnorm2d") {
    struct Case { int b, c, h; };
    for (auto cs : {Case{3, 2, 4}, Case{2, 4, 3}, Case{5, 1, 2}}) {
      auto x = random_leaf({cs.b, cs.c, cs.h, cs.h}, rng);
      auto g = T::leaf({cs.c}, true);
      g.values().setConstant(1.0);
      for (Eigen::Index i = 0; i < g.size(); ++i) g.values()(i) += 0.3 * rng.normal();
      auto be = random_leaf({cs.c}, rng);
      check_fd({x, g, be}, weighted([&] { return ad::batchnorm2d(x, g, be); }, rng), 5e-6);
    }
  }
  SUBCASE("add_chan") {
    auto x = random_leaf({2, 3, 4, 4}, rng);
    auto b = random_leaf({3}, rng);
    check_fd({x, b}, weighted([&] { return ad::add_chan(x, b); }, rng));
  }
}

TEST_CASE("double backward through an input gradient matches FD") {
  // The gradient-penalty pattern: p = mean((||dD/dz||-1)^2) differentiated
  // w.r.t. the critic parameters.
  RngStream rng(303, "double-bwd");
  auto z_const = random_leaf({5, 4}, rng, "z");
  auto w1 = random_leaf({4, 6}, rng, "w1");
  auto b1 = random_leaf({6}, rng, "b1");
  auto w2 = random_leaf({6, 1}, rng, "w2");
  auto b2 = random_leaf({1}, rng, "b2");

  auto penalty_graph = [&] {
    auto z = T::constant(z_const.shape(), z_const.values(), "zin");
    auto zin = T::leaf(z.shape(), true, "zhat");
    zin.values() = z.values();
    auto h = ad::leaky_relu(ad::add_rowvec(ad::matmul(zin, w1), b1), 0.2);
    auto score = ad::add_rowvec(ad::matmul(h, w2), b2);
    auto total = ad::sum(score);
    auto ones = T::scalar(1.0);
    const T wrt[] = {zin};
    auto g = ad::grad_of(total, ones, std::span<const T>(wrt), true)[0];
    return ad::mean(ad::square(ad::add_scalar(ad::rownorm(g), -1.0)));
  };
  check_fd({w1, b1, w2, b2}, penalty_graph, 1e-6);
}

TEST_CASE("grad_of with zero cotangent returns zero gradients") {
  RngStream rng(404, "vjp");
  auto x = random_leaf({3, 3}, rng);
  auto y = ad::tanh(ad::matmul(x, x));
  auto zero = T::zeros(y.shape());
  const T wrt[] = {x};
  auto g = ad::grad_of(y, zero, std::span<const T>(wrt), false);
  CHECK((g[0].values() == 0.0).all());
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    RngStream rng(7, "det");
    auto x = random_leaf({8, 8}, rng);
    auto w = random_leaf({8, 8}, rng);
    auto loss = ad::mean(ad::square(ad::tanh(ad::matmul(x, w))));
    std::vector<T> params{x, w};
    ad::backward(loss, std::span<T>(params));
    return std::pair{x.grad().matrix().eval(), w.grad().matrix().eval()};
  };
  auto [g1x, g1w] = run();
  auto [g2x, g2w] = run();
  CHECK((g1x.array() == g2x.array()).all());
  CHECK((g1w.array() == g2w.array()).all());
}

TEST_CASE("float tensors pass a coarser FD check") {
  using F = ad::Tensor<float>;
  RngStream rng(55, "f32");
  auto x = F::leaf({3, 4}, true);
  auto w = F::leaf({4, 2}, true);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.values()(i) = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.values()(i) = static_cast<float>(rng.normal());
  auto graph = [&] { return ad::mean(ad::square(ad::tanh(ad::matmul(x, w)))); };
  auto loss = graph();
  std::vector<F> params{x, w};
  ad::backward(loss, std::span<F>(params));
  auto fd = test::fd_gradients<float>(
      params, [&] { return graph().item(); }, 1e-2f);
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(test::max_rel_err<float>(params[i].grad(), fd[i], 1e-2) < 1e-2);
}
