#include "lqg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lqg/rng.hpp"

namespace lqg::metrics {

GaussianStats GaussianStats::from_samples(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) throw DataError("GaussianStats: empty sample set");
  GaussianStats s;
  s.n = rows.rows();
  s.mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  const double denom = s.n > 1 ? static_cast<double>(s.n - 1) : 1.0;
  s.cov = (centered.transpose() * centered) / denom;
  s.cov = 0.5 * (s.cov + s.cov.transpose());  // enforce exact symmetry
  return s;
}

namespace {

// Symmetric PSD square root with the documented negative-eigenvalue policy.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw DataError(std::string("eigendecomposition failed in ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8 * scale)
      throw DataError(std::string(what) + ": eigenvalue " + std::to_string(ev(i)) +
                      " below tolerance, covariance is not PSD");
    if (ev(i) < 0) ev(i) = 0;
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mean.size() != s2.mean.size())
    throw DataError("frechet_distance: dimension mismatch " + std::to_string(s1.mean.size()) +
                    " vs " + std::to_string(s2.mean.size()));
  const Eigen::MatrixXd c1_half = psd_sqrt(s1.cov, "frechet_distance(C1)");
  const Eigen::MatrixXd inner = c1_half * s2.cov * c1_half;
  const Eigen::MatrixXd inner_sqrt = psd_sqrt(0.5 * (inner + inner.transpose()),
                                              "frechet_distance(C1^1/2 C2 C1^1/2)");
  const double d = (s1.mean - s2.mean).squaredNorm() + s1.cov.trace() + s2.cov.trace() -
                   2.0 * inner_sqrt.trace();
  if (d < -1e-6)
    throw DataError("frechet_distance: value " + std::to_string(d) + " below -1e-6");
  return std::max(0.0, d);
}

FidResult fid(const Eigen::MatrixXd& real_features, const Eigen::MatrixXd& fake_features) {
  if (real_features.rows() < 1 || fake_features.rows() < 1)
    throw DataError("fid: empty sample set");
  if (real_features.cols() != fake_features.cols())
    throw DataError("fid: feature dimension mismatch");
  FidResult r;
  r.n_real = real_features.rows();
  r.n_fake = fake_features.rows();
  r.under_sampled = std::min(r.n_real, r.n_fake) <= real_features.cols();
  r.value = frechet_distance(GaussianStats::from_samples(real_features),
                             GaussianStats::from_samples(fake_features));
  return r;
}

double jsd(const Eigen::MatrixXd& p_rows, const Eigen::MatrixXd& q_rows, JsdSpace space,
           int bins) {
  if (p_rows.rows() < 1 || q_rows.rows() < 1) throw DataError("jsd: empty sample set");
  if (p_rows.cols() != q_rows.cols()) throw DataError("jsd: dimension mismatch");
  if (bins < 2) throw ConfigError("jsd: need at least 2 bins");
  const double lo = space == JsdSpace::raw ? 0.0 : -1.0;
  const double hi = 1.0;
  const double width = (hi - lo) / bins;

  const Eigen::Index dims = p_rows.cols();
  std::vector<double> hp(static_cast<std::size_t>(bins)), hq(static_cast<std::size_t>(bins));
  auto bin_of = [&](double v) {
    int b = static_cast<int>(std::floor((v - lo) / width));
    return std::clamp(b, 0, bins - 1);
  };
  double total = 0;
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::fill(hp.begin(), hp.end(), 0.0);
    std::fill(hq.begin(), hq.end(), 0.0);
    for (Eigen::Index i = 0; i < p_rows.rows(); ++i)
      hp[static_cast<std::size_t>(bin_of(p_rows(i, d)))] += 1.0;
    for (Eigen::Index i = 0; i < q_rows.rows(); ++i)
      hq[static_cast<std::size_t>(bin_of(q_rows(i, d)))] += 1.0;
    const double np = static_cast<double>(p_rows.rows()), nq = static_cast<double>(q_rows.rows());
    double acc = 0;
    for (int b = 0; b < bins; ++b) {
      const double p = hp[static_cast<std::size_t>(b)] / np;
      const double q = hq[static_cast<std::size_t>(b)] / nq;
      const double m = 0.5 * (p + q);
      if (p > 0) acc += 0.5 * p * std::log(p / m);
      if (q > 0) acc += 0.5 * q * std::log(q / m);
    }
    total += acc;
  }
  return total / static_cast<double>(dims);
}

Eigen::MatrixXd FeatureExtractor::operator()(const Eigen::MatrixXd& rows) const {
  if (kind == "pixel-flatten") return rows;
  if (kind == "random-projection") {
    if (dim < 1) throw ConfigError("random-projection: dim must be >= 1");
    RngStream rng(seed, "feature.random-projection");
    Eigen::MatrixXd proj(rows.cols(), dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows.cols()));
    for (Eigen::Index i = 0; i < proj.rows(); ++i)
      for (Eigen::Index j = 0; j < proj.cols(); ++j) proj(i, j) = scale * rng.normal();
    return rows * proj;
  }
  throw ConfigError("unknown feature extractor kind '" + kind +
                    "' (ae-encoder features are produced by the caller)");
}

}  // namespace lqg::metrics
