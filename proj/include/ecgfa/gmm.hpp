#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "ecgfa/factor_analysis.hpp"

namespace ecgfa {

struct GmmOptions {
  int components = 5;
  int restarts = 10;
  int max_iterations = 300;
  double relative_tolerance = 1e-8;
  double ridge_fraction = 1e-6;   // each covariance gets ridge_fraction * tr(Sigma_c) / p on its diagonal
  double empty_mass = 1e-3;       // a component with less total responsibility than this is empty
  int max_reinitializations = 20; // per restart
};

struct GmmFit {
  LatentMixture mixture;
  double log_likelihood = 0.0;
  int iterations = 0;
  int restart = 0;  // index of the restart that won
};

// Full-covariance Gaussian mixture by EM with k-means++ seeding; the best of
// `restarts` runs by log-likelihood is returned. Empty components are
// re-seeded at a random point, and kEmptyComponent is raised once the
// re-seeding budget is spent.
GmmFit fit_gmm(const Eigen::MatrixXd& points, const GmmOptions& options, std::uint64_t seed);

// log p(x) under the mixture, for each row.
Eigen::VectorXd gmm_log_density(const LatentMixture& mixture, const Eigen::MatrixXd& points);

}  // namespace ecgfa
