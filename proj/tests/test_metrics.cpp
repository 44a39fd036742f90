#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lqg/metrics.hpp"
#include "lqg/rng.hpp"

using namespace lqg;
using metrics::GaussianStats;

namespace {

Eigen::MatrixXd normal_rows(Eigen::Index n, Eigen::Index d, RngStream& rng, double shift = 0,
                            double scale = 1) {
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = shift + scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("frechet distance of identical stats is zero") {
  RngStream rng(1, "fd0");
  auto s = GaussianStats::from_samples(normal_rows(200, 6, rng));
  CHECK(std::abs(metrics::frechet_distance(s, s)) < 1e-8);
}

TEST_CASE("frechet distance matches the 1-D closed form") {
  // (mu1,s1) vs (mu2,s2): (mu1-mu2)^2 + (s1-s2)^2; (0,1) vs (1,2) -> 2.
  GaussianStats a, b;
  a.mean = Eigen::VectorXd::Zero(1);
  a.cov = Eigen::MatrixXd::Identity(1, 1);
  a.n = 1000;
  b.mean = Eigen::VectorXd::Constant(1, 1.0);
  b.cov = Eigen::MatrixXd::Identity(1, 1) * 4.0;
  b.n = 1000;
  CHECK(std::abs(metrics::frechet_distance(a, b) - 2.0) < 1e-9);
}

TEST_CASE("frechet distance matches the diagonal closed form") {
  GaussianStats a, b;
  const int d = 5;
  Eigen::VectorXd c1(d), c2(d);
  c1 << 1.0, 2.0, 0.5, 3.0, 1.5;
  c2 << 2.0, 1.0, 0.5, 0.25, 4.0;
  a.mean = Eigen::VectorXd::LinSpaced(d, 0.0, 1.0);
  b.mean = Eigen::VectorXd::LinSpaced(d, 1.0, 0.0);
  a.cov = c1.asDiagonal();
  b.cov = c2.asDiagonal();
  a.n = b.n = 100;
  double want = (a.mean - b.mean).squaredNorm();
  for (int i = 0; i < d; ++i) want += std::pow(std::sqrt(c1(i)) - std::sqrt(c2(i)), 2);
  CHECK(std::abs(metrics::frechet_distance(a, b) - want) < 1e-9);
}

TEST_CASE("frechet distance is monotone in the mean separation") {
  GaussianStats a, b;
  a.mean = Eigen::VectorXd::Zero(3);
  a.cov = Eigen::MatrixXd::Identity(3, 3);
  a.n = 100;
  b = a;
  double prev = -1;
  for (double shift : {0.0, 0.5, 1.0, 2.0}) {
    b.mean = Eigen::VectorXd::Constant(3, shift);
    const double v = metrics::frechet_distance(a, b);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("strongly negative covariance eigenvalues are an error") {
  GaussianStats a, b;
  a.mean = b.mean = Eigen::VectorXd::Zero(2);
  a.cov = Eigen::MatrixXd::Identity(2, 2);
  b.cov = Eigen::MatrixXd::Identity(2, 2);
  b.cov(1, 1) = -0.5;
  a.n = b.n = 100;
  CHECK_THROWS_AS(metrics::frechet_distance(a, b), DataError);
}

TEST_CASE("fid of a set against itself is zero and order-free") {
  RngStream rng(2, "fid");
  auto x = normal_rows(300, 8, rng);
  const auto r = metrics::fid(x, x);
  CHECK(std::abs(r.value) < 1e-6);
  CHECK_FALSE(r.under_sampled);

  // permuting the sample order changes nothing (the statistic is moment-based)
  Eigen::MatrixXd shuffled = x;
  RngStream prng(3, "perm");
  auto perm = random_permutation(static_cast<std::size_t>(x.rows()), prng);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    shuffled.row(i) = x.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  CHECK(metrics::fid(shuffled, x).value == metrics::fid(x, x).value);
}

TEST_CASE("fid of shifted isotropic 8-dim Gaussians is 8 within 0.1 at n=50000") {
  RngStream rng(4, "fid8");
  auto real = normal_rows(50000, 8, rng, 0.0);
  auto fake = normal_rows(50000, 8, rng, 1.0);
  const auto r = metrics::fid(real, fake);
  CHECK(std::abs(r.value - 8.0) < 0.1);
  CHECK_FALSE(r.under_sampled);
}

TEST_CASE("fid is symmetric") {
  RngStream rng(5, "fid-sym");
  auto a = normal_rows(400, 6, rng, 0.0);
  auto b = normal_rows(400, 6, rng, 0.3, 1.2);
  CHECK(std::abs(metrics::fid(a, b).value - metrics::fid(b, a).value) < 1e-8);
}

TEST_CASE("under-sampled estimates carry the machine-readable flag") {
  RngStream rng(6, "fid-us");
  auto a = normal_rows(8, 8, rng);
  auto b = normal_rows(8, 8, rng);
  CHECK(metrics::fid(a, b).under_sampled);
  auto c = normal_rows(9, 8, rng);
  auto d = normal_rows(9, 8, rng);
  CHECK_FALSE(metrics::fid(c, d).under_sampled);
}

TEST_CASE("jsd is zero on identical sets, ln 2 on disjoint supports, symmetric") {
  RngStream rng(7, "jsd");
  Eigen::MatrixXd p(500, 4);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i / 4, i % 4) = rng.uniform();
  CHECK(metrics::jsd(p, p, metrics::JsdSpace::raw) == 0.0);

  // Disjoint supports: [0, 0.4) vs [0.6, 1.0).
  Eigen::MatrixXd q = p;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      p(i, j) = 0.4 * rng.uniform();
      q(i, j) = 0.6 + 0.4 * rng.uniform();
    }
  CHECK(std::abs(metrics::jsd(p, q, metrics::JsdSpace::raw) - std::numbers::ln2) < 1e-12);

  auto ab = metrics::jsd(p, q, metrics::JsdSpace::raw);
  auto ba = metrics::jsd(q, p, metrics::JsdSpace::raw);
  CHECK(ab == ba);  // bit-exact symmetry
}

TEST_CASE("jsd stays within [0, ln 2] and respects the feature range") {
  RngStream rng(8, "jsd-b");
  Eigen::MatrixXd p(300, 6), q(300, 6);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i / 6, i % 6) = std::tanh(rng.normal());
    q(i / 6, i % 6) = std::tanh(rng.normal() + 0.5);
  }
  const double v = metrics::jsd(p, q, metrics::JsdSpace::feature);
  CHECK(v >= 0.0);
  CHECK(v <= std::numbers::ln2 + 1e-15);
}

TEST_CASE("jsd input validation") {
  Eigen::MatrixXd p(3, 2), q(3, 3);
  p.setZero();
  q.setZero();
  CHECK_THROWS_AS(metrics::jsd(p, q, metrics::JsdSpace::raw), DataError);
  Eigen::MatrixXd q2(3, 2);
  q2.setZero();
  CHECK_THROWS_AS(metrics::jsd(p, q2, metrics::JsdSpace::raw, 1), ConfigError);
}

TEST_CASE("feature extractors are deterministic and shape-correct") {
  RngStream rng(9, "ex");
  auto x = normal_rows(20, 30, rng);
  metrics::FeatureExtractor flat{"pixel-flatten"};
  CHECK(flat(x) == x);

  metrics::FeatureExtractor proj{"random-projection", 7, 123};
  auto f1 = proj(x);
  auto f2 = proj(x);
  CHECK(f1.rows() == 20);
  CHECK(f1.cols() == 7);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);

  metrics::FeatureExtractor proj2{"random-projection", 7, 124};
  CHECK((proj2(x) - f1).cwiseAbs().maxCoeff() != 0.0);

  metrics::FeatureExtractor bad{"ae-encoder"};
  CHECK_THROWS_AS(bad(x), ConfigError);
}

TEST_CASE("rfid-style degenerate cases") {
  RngStream rng(10, "rfid");
  auto x = normal_rows(300, 5, rng, 0.5, 0.1);
  // identity reconstruction -> 0
  CHECK(std::abs(metrics::fid(x, x).value) < 1e-6);
  // constant-output reconstruction -> strictly positive FID vs a point mass
  Eigen::MatrixXd point = Eigen::MatrixXd::Zero(300, 5);
  CHECK(metrics::fid(x, point).value > 0.1);
}
