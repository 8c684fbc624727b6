#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "ecgfa/factor_analysis.hpp"
#include "ecgfa/gmm.hpp"

namespace ecgfa {

// Factor model whose latent prior is a fitted Gaussian mixture.
struct MogFaModel {
  FaModel fa;             // loadings refit under the mixture prior
  LatentMixture mixture;  // over the p-dimensional latent space
  double mixture_log_likelihood = 0.0;  // of the stage-one latent means

  [[nodiscard]] Eigen::Index components() const { return mixture.components(); }
  void validate() const;
};

struct MogFaOptions {
  FaFitOptions fa;
  GmmOptions gmm;
  std::uint64_t seed = 0;
};

// How the component posterior means are combined.
enum class MixtureWeighting {
  kResponsibility,  // p(c | x~), the posterior mean of the model
  kPrior,           // pi_c, as the closed-form expression is sometimes written
};

// Stage 1: plain FA and its latent posterior means. Stage 2: a GMM on those
// means. Stage 3: loadings and residual diagonal refit by EM with the mixture
// held fixed, starting from the stage-1 fit.
MogFaModel fit_mog_fa(const FaData& data, Eigen::Index p, const MogFaOptions& options = {});
MogFaModel fit_mog_fa(const Eigen::MatrixXd& beats, const CovarianceMatrix& k, std::span<const NoisePrecision> taus,
                      Eigen::Index p, int components, Eigen::Index replicates = 1, const MogFaOptions& options = {});

// Stage 3 alone: EM on the loadings under a given mixture prior.
MogFaModel refit_under_mixture(const FaData& data, FaModel init, LatentMixture mixture,
                               const FaFitOptions& options = {});

// Latent posterior means of every row under N(0, I).
Eigen::MatrixXd fa_latent_means(const FaModel& model, const FaData& data);

Eigen::VectorXd mog_fa_responsibilities(const MogFaModel& model, const Eigen::VectorXd& white_row, double noise_var);

Eigen::VectorXd mog_fa_posterior_mean(const MogFaModel& model, const EcgSample& sample, const CovarianceMatrix& k,
                                      NoisePrecision tau,
                                      MixtureWeighting weighting = MixtureWeighting::kResponsibility,
                                      ResidualTreatment residual = ResidualTreatment::kNoise);
Eigen::VectorXd mog_fa_posterior_mean(const MogFaModel& model, const Eigen::VectorXd& beat_mean,
                                      Eigen::Index replicates, const CovarianceMatrix& k, NoisePrecision tau,
                                      MixtureWeighting weighting = MixtureWeighting::kResponsibility,
                                      ResidualTreatment residual = ResidualTreatment::kNoise);

}  // namespace ecgfa
