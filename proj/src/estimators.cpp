#include "ecgfa/estimators.hpp"

#include <cmath>
#include <limits>

#include "ecgfa/error.hpp"

namespace ecgfa {

Eigen::VectorXd mle_average(const EcgSample& sample) {
  sample.validate();
  return sample.beat_mean();
}

OracleBayes::OracleBayes(AtomPrior prior, const CovarianceMatrix& k) : prior_(std::move(prior)), k_(k) {
  require(prior_.size() >= 1, "oracle_bayes: atom prior is empty");
  require(prior_.dim() == k_.dim(), "oracle_bayes: atom length differs from covariance dimension");
  // Row by row so that equal atoms whiten to bit-identical rows.
  white_atoms_.resize(prior_.size(), prior_.dim());
  Eigen::VectorXd atom(prior_.dim());
  for (Eigen::Index j = 0; j < prior_.size(); ++j) {
    atom = prior_.atoms.row(j).transpose();
    white_atoms_.row(j) = (k_.inv_sqrt() * atom).transpose();
  }
}

Eigen::Index OracleBayes::nearest_atom(const Eigen::VectorXd& beat_mean) const {
  require(beat_mean.size() == k_.dim(), "oracle_bayes: beat length differs from covariance dimension");
  const Eigen::VectorXd white = k_.inv_sqrt() * beat_mean;
  // Each distance is formed by the same scalar loop, so equal atoms score
  // identically and the lowest index wins.
  Eigen::Index best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < white_atoms_.rows(); ++j) {
    const double* atom = white_atoms_.row(j).data();
    double score = 0.0;
    for (Eigen::Index t = 0; t < white.size(); ++t) {
      const double diff = atom[t] - white[t];
      score += diff * diff;
    }
    if (score < best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

Eigen::VectorXd OracleBayes::estimate(const EcgSample& sample) const {
  sample.validate();
  return prior_.atoms.row(nearest_atom(sample.beat_mean())).transpose();
}

Eigen::VectorXd oracle_bayes(const EcgSample& sample, const AtomPrior& atoms, const CovarianceMatrix& k) {
  return OracleBayes(atoms, k).estimate(sample);
}

Eigen::Index select_latent_dim(std::span<const double> eigenvalues, double slope_cutoff) {
  if (eigenvalues.empty()) fail(ErrorCode::kInvalidArgument, "select_latent_dim: no eigenvalues");
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    require(eigenvalues[i] >= 0.0, "select_latent_dim: eigenvalues must be >= 0");
    if (i > 0) require(eigenvalues[i] <= eigenvalues[i - 1], "select_latent_dim: eigenvalues must be descending");
  }
  Eigen::Index p = 1;
  for (std::size_t i = 1; i < eigenvalues.size(); ++i) {
    // A zero tail is treated as a flat floor, not an infinitely steep drop.
    if (eigenvalues[i] <= 0.0) break;
    const double slope = std::log(eigenvalues[i]) - std::log(eigenvalues[i - 1]);
    if (slope > slope_cutoff) break;
    ++p;
  }
  return p;
}

double summed_squared_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) {
    fail(ErrorCode::kLengthMismatch, "mse: estimate has length " + std::to_string(estimate.size()) +
                                         ", truth has length " + std::to_string(truth.size()));
  }
  return (estimate - truth).squaredNorm();
}

double mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  const double total = summed_squared_error(estimate, truth);
  return truth.size() == 0 ? 0.0 : total / static_cast<double>(truth.size());
}

}  // namespace ecgfa
