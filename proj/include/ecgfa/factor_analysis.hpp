#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/noise_model.hpp"

namespace ecgfa {

// Whitened, centred per-sample beat averages x~_i = K^{-1/2}(xbar_i - mu), each
// with its known measurement-noise variance s_i = 1 / (tau_i^2 B_i).
struct FaData {
  Eigen::VectorXd mean;       // mu, beat space
  Eigen::MatrixXd white;      // N x d
  Eigen::VectorXd noise_var;  // N

  [[nodiscard]] Eigen::Index size() const { return white.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return white.cols(); }

  static FaData from_samples(std::span<const EcgSample> samples, const CovarianceMatrix& k,
                             std::span<const NoisePrecision> taus);
  // Rows are beat averages over `replicates` beats.
  static FaData from_rows(const Eigen::MatrixXd& rows, const CovarianceMatrix& k,
                          std::span<const NoisePrecision> taus, Eigen::Index replicates = 1);

  // Descending eigenvalues of white^T white / N (the scree spectrum).
  [[nodiscard]] Eigen::VectorXd covariance_eigenvalues() const;
};

// Factor model in whitened coordinates:
//   x~_i = L~ z_i + u_i + e_i,  z ~ N(0, I_p),  u ~ N(0, diag(noise_diag)),  e ~ N(0, s_i I).
// The beat-space loadings are L = K^{1/2} L~ and the implied prior over the
// canonical beat is N(mu, K^{1/2}(L~L~^T + diag(noise_diag))K^{1/2}).
// With isotropic_residual (the default) all noise_diag entries share one value,
// so the posterior shrinkage is symmetric in whitened coordinates.
struct FaModel {
  Eigen::VectorXd mean;          // mu (mV)
  Eigen::MatrixXd loadings;      // L~, d x p
  Eigen::VectorXd noise_diag;    // whitened residual variances beyond the known noise
  std::vector<double> log_likelihood;  // observed-data log-likelihood per EM iteration
  int iterations = 0;
  bool converged = false;

  [[nodiscard]] Eigen::Index dim() const { return loadings.rows(); }
  [[nodiscard]] Eigen::Index latent_dim() const { return loadings.cols(); }
  [[nodiscard]] Eigen::MatrixXd beat_loadings(const CovarianceMatrix& k) const { return k.sqrt() * loadings; }
  void validate() const;
};

struct FaFitOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  double variance_floor = 1e-8;   // lower bound on noise_diag entries
  int variance_substeps = 3;      // inner EM steps on noise_diag per iteration
  bool isotropic_residual = true;  // tie noise_diag to one shared value
};

// Latent prior for the EM engine: a Gaussian mixture over z (C = 1, mean 0,
// covariance I gives plain factor analysis).
struct LatentMixture {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  [[nodiscard]] Eigen::Index components() const { return static_cast<Eigen::Index>(weights.size()); }
  [[nodiscard]] Eigen::Index latent_dim() const { return means.empty() ? 0 : means.front().size(); }
  static LatentMixture standard_normal(Eigen::Index p);
  void validate() const;
};

// Posterior of one whitened row under a fitted model and latent prior.
struct RowPosterior {
  Eigen::VectorXd responsibilities;  // p(c | x~), sums to 1
  std::vector<Eigen::VectorXd> component_means;  // E[z | x~, c]
  std::vector<Eigen::MatrixXd> component_covs;   // V[z | x~, c]
  Eigen::VectorXd latent_mean;       // sum_c r_c E[z | x~, c]
  double log_likelihood = 0.0;       // log p(x~)
};

RowPosterior row_posterior(const FaModel& model, const LatentMixture& prior, const Eigen::VectorXd& white_row,
                           double noise_var);

// EM for the loadings and residual diagonal with the latent prior held fixed.
// `init` supplies starting values; the log-likelihood trace is appended.
FaModel fit_loadings_em(const FaData& data, FaModel init, const LatentMixture& prior, const FaFitOptions& options);

// Spectral start: top-p eigenvectors of the whitened covariance scaled by
// sqrt(max(lambda - mean noise, eps)); residual diagonal from what remains.
FaModel initial_fa_model(const FaData& data, Eigen::Index p, double variance_floor = 1e-8);

FaModel fit_factor_analysis(const FaData& data, Eigen::Index p, const FaFitOptions& options = {});
FaModel fit_factor_analysis(const Eigen::MatrixXd& beats, const CovarianceMatrix& k,
                            std::span<const NoisePrecision> taus, Eigen::Index p, Eigen::Index replicates = 1,
                            const FaFitOptions& options = {});

// Role of the fitted residual diagonal in the posterior mean.
enum class ResidualTreatment {
  kNoise,   // L~ m: the residual is part of D, as in L L^T (L L^T + D)^{-1}
  kSignal,  // L~ m + diag(noise_diag) D^{-1} (x~ - L~ m), D = noise_diag + s
};

// Whitened signal estimate given the latent posterior mean m.
Eigen::VectorXd white_signal_mean(const FaModel& model, const Eigen::VectorXd& white_row, double noise_var,
                                  const Eigen::VectorXd& latent_mean,
                                  ResidualTreatment residual = ResidualTreatment::kNoise);

// Denoised beat from the sample's beat average, with effective noise variance
// 1 / (tau^2 B).
Eigen::VectorXd fa_posterior_mean(const FaModel& model, const EcgSample& sample, const CovarianceMatrix& k,
                                  NoisePrecision tau, ResidualTreatment residual = ResidualTreatment::kNoise);
// Same, from an already-averaged beat.
Eigen::VectorXd fa_posterior_mean(const FaModel& model, const Eigen::VectorXd& beat_mean, Eigen::Index replicates,
                                  const CovarianceMatrix& k, NoisePrecision tau,
                                  ResidualTreatment residual = ResidualTreatment::kNoise);

}  // namespace ecgfa
