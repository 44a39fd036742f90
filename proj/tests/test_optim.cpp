#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lqg/optim.hpp"
#include "lqg/rng.hpp"

using namespace lqg;
using T = ad::Tensor<double>;
using Arr = Eigen::ArrayXd;

TEST_CASE("clip_global_norm halves a norm-10 gradient set at c=5") {
  std::vector<Arr> grads;
  grads.push_back((Arr(2) << 6.0, 0.0).finished());
  grads.push_back((Arr(1) << 8.0).finished());  // joint norm exactly 10
  clip_global_norm<double>(std::span<Arr>(grads), 5.0);
  CHECK(grads[0](0) == 3.0);
  CHECK(grads[0](1) == 0.0);
  CHECK(grads[1](0) == 4.0);
}

TEST_CASE("clip_global_norm passes small gradients through untouched") {
  std::vector<Arr> grads;
  grads.push_back((Arr(3) << 1.0, 2.0, 2.0).finished());  // norm 3
  const Arr before = grads[0];
  clip_global_norm<double>(std::span<Arr>(grads), 5.0);
  CHECK((grads[0] == before).all());
}

TEST_CASE("clip_global_norm on [3,4] at c=1 gives [0.6, 0.8]") {
  std::vector<Arr> grads;
  grads.push_back((Arr(2) << 3.0, 4.0).finished());
  clip_global_norm<double>(std::span<Arr>(grads), 1.0);
  CHECK(grads[0](0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(grads[0](1) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("clip_global_norm is bit-exact idempotent") {
  RngStream rng(12, "clip");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Arr> grads;
    for (int b = 0; b < 4; ++b) {
      Arr g(37);
      for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = 3.0 * rng.normal();
      grads.push_back(std::move(g));
    }
    clip_global_norm<double>(std::span<Arr>(grads), 0.7);
    std::vector<Arr> again = grads;
    clip_global_norm<double>(std::span<Arr>(again), 0.7);
    for (int b = 0; b < 4; ++b) CHECK((again[static_cast<std::size_t>(b)] == grads[static_cast<std::size_t>(b)]).all());
  }
}

TEST_CASE("zero gradients pass through clip unchanged") {
  std::vector<Arr> grads{Arr::Zero(5)};
  clip_global_norm<double>(std::span<Arr>(grads), 2.0);
  CHECK((grads[0] == 0.0).all());
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  auto p = T::leaf({3}, true, "p");
  p.values() << 1.0, -2.0, 0.5;
  const Arr before = p.values();
  Adam<double> opt({p}, {0.01, 0.9, 0.999});
  opt.zero_grad();
  opt.step();
  CHECK((p.values() == before).all());
}

TEST_CASE("adam first step moves by exactly -lr*sign(g)") {
  auto p = T::leaf({1}, true, "p");
  p.values() << 0.0;
  Adam<double> opt({p}, {0.001, 0.5, 0.999});
  p.grad()(0) = 1.0;
  opt.step();
  // Bias correction makes m-hat = g and v-hat = g^2 on step one.
  CHECK(p.values()(0) == doctest::Approx(-0.001).epsilon(1e-7));
  CHECK(std::abs(p.values()(0) + 0.001) < 1e-10);
}

TEST_CASE("adam converges on (p-3)^2") {
  auto p = T::leaf({1}, true, "p");
  p.values() << 0.0;
  Adam<double> opt({p}, {0.05, 0.9, 0.999});
  for (int i = 0; i < 1000; ++i) {
    p.zero_grad();
    p.grad()(0) = 2.0 * (p.values()(0) - 3.0);
    opt.step();
  }
  CHECK(std::abs(p.values()(0) - 3.0) < 0.01);
}

TEST_CASE("adam rejects NaN gradients naming the block") {
  auto p = T::leaf({2}, true, "critic.w1");
  Adam<double> opt({p}, {0.01, 0.9, 0.999});
  p.grad()(0) = std::nan("");
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("critic.w1"), NumericError);
}

TEST_CASE("adam step count increases by one per apply") {
  auto p = T::leaf({1}, true, "p");
  Adam<double> opt({p}, {0.01, 0.9, 0.999});
  for (int i = 1; i <= 5; ++i) {
    p.grad()(0) = 1.0;
    opt.step();
    CHECK(opt.states()[0].step == i);
  }
}

TEST_CASE("lecun init has variance 1/fan_in and is seed-stable") {
  RngStream r1(42, "init.t"), r2(42, "init.t"), r3(42, "init.u");
  auto a = lecun_normal_init<double>({10000}, 4, r1);
  auto b = lecun_normal_init<double>({10000}, 4, r2);
  CHECK((a.values() == b.values()).all());

  const double mean = a.values().mean();
  const double var = (a.values() - mean).square().sum() / (a.size() - 1);
  CHECK(var > 0.2);
  CHECK(var < 0.3);

  auto c = lecun_normal_init<double>({10000}, 1, r3);
  CHECK(std::abs(c.values().mean()) < 0.05);

  RngStream r4(42, "init.t");
  CHECK_THROWS_AS(lecun_normal_init<double>({4}, 0, r4), ConfigError);
}
