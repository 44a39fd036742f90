#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "lqg/errors.hpp"

// Distribution metrics over feature matrices (one sample per row).
// Everything here is a pure function of its inputs.
namespace lqg::metrics {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // symmetric, unbiased estimate
  std::int64_t n = 0;

  static GaussianStats from_samples(const Eigen::MatrixXd& rows);
};

// ||mu1-mu2||^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}). The matrix square root is
// taken through the symmetrized product C1^{1/2} C2 C1^{1/2}; eigenvalues in
// (-1e-8, 0) are clamped to zero, more negative ones are an error. The final
// value is clamped at 0 (it can round to ~-1e-9 for identical inputs).
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

struct FidResult {
  double value = 0;
  std::int64_t n_real = 0;
  std::int64_t n_fake = 0;
  // True when min(n_real, n_fake) <= feature dim: covariances cannot be full
  // rank and the estimate is unreliable.
  bool under_sampled = false;
};

FidResult fid(const Eigen::MatrixXd& real_features, const Eigen::MatrixXd& fake_features);

enum class JsdSpace { raw, feature };

// Mean per-dimension Jensen-Shannon divergence between histogrammed
// marginals, natural log (bound ln 2). Canonical ranges: raw [0,1],
// feature [-1,1]; values outside are counted in the edge bins.
double jsd(const Eigen::MatrixXd& p_rows, const Eigen::MatrixXd& q_rows, JsdSpace space,
           int bins = 64);

// Feature extractors. `kind` is one of "pixel-flatten", "random-projection",
// "ae-encoder"; the AE variant is applied by the caller (it owns the nets)
// while the first two are closed-form and live here.
struct FeatureExtractor {
  std::string kind = "pixel-flatten";
  int dim = 64;            // random-projection output dim
  std::uint64_t seed = 0;  // random-projection seed

  // rows = flattened samples; returns feature rows.
  Eigen::MatrixXd operator()(const Eigen::MatrixXd& rows) const;
};

}  // namespace lqg::metrics
