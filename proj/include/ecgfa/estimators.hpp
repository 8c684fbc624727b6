#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/noise_model.hpp"

namespace ecgfa {

// Sample mean of the aligned beats.
Eigen::VectorXd mle_average(const EcgSample& sample);

// The oracle's discrete prior: the realized canonical beats, one per row.
struct AtomPrior {
  Eigen::MatrixXd atoms;  // N x d

  [[nodiscard]] Eigen::Index size() const { return atoms.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return atoms.cols(); }
};

// Nearest atom in K-whitened distance. Atoms are whitened once on construction.
class OracleBayes {
 public:
  OracleBayes(AtomPrior prior, const CovarianceMatrix& k);

  // Lowest index wins ties.
  [[nodiscard]] Eigen::Index nearest_atom(const Eigen::VectorXd& beat_mean) const;
  [[nodiscard]] Eigen::VectorXd estimate(const EcgSample& sample) const;
  [[nodiscard]] const AtomPrior& prior() const { return prior_; }

 private:
  AtomPrior prior_;
  CovarianceMatrix k_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> white_atoms_;  // N x d
};

Eigen::VectorXd oracle_bayes(const EcgSample& sample, const AtomPrior& atoms, const CovarianceMatrix& k);

// Scree rule: 1 + the number of leading consecutive log-eigenvalue slopes that
// are <= slope_cutoff. Eigenvalues must be sorted descending and >= 0.
Eigen::Index select_latent_dim(std::span<const double> eigenvalues, double slope_cutoff = -0.8);

// Per-coordinate mean squared error (1/d) * sum (estimate - truth)^2.
double mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);
// Summed squared error, the convention of the benchmark tables.
double summed_squared_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

}  // namespace ecgfa
