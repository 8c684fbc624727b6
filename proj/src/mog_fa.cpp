#include "ecgfa/mog_fa.hpp"

#include <utility>

#include "ecgfa/error.hpp"

namespace ecgfa {

void MogFaModel::validate() const {
  fa.validate();
  mixture.validate();
  require(mixture.latent_dim() == fa.latent_dim(), "MogFaModel: mixture dimension differs from loadings");
}

Eigen::MatrixXd fa_latent_means(const FaModel& model, const FaData& data) {
  const LatentMixture prior = LatentMixture::standard_normal(model.latent_dim());
  Eigen::MatrixXd out(data.size(), model.latent_dim());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out.row(i) = row_posterior(model, prior, data.white.row(i).transpose(), data.noise_var[i]).latent_mean.transpose();
  }
  return out;
}

MogFaModel refit_under_mixture(const FaData& data, FaModel init, LatentMixture mixture, const FaFitOptions& options) {
  init.log_likelihood.clear();
  MogFaModel out;
  out.fa = fit_loadings_em(data, std::move(init), mixture, options);
  out.mixture = std::move(mixture);
  return out;
}

MogFaModel fit_mog_fa(const FaData& data, Eigen::Index p, const MogFaOptions& options) {
  require(data.size() >= options.gmm.components, "fit_mog_fa: needs N >= C");
  FaModel stage1 = fit_factor_analysis(data, p, options.fa);
  const Eigen::MatrixXd latent = fa_latent_means(stage1, data);
  GmmFit gmm = fit_gmm(latent, options.gmm, options.seed);
  MogFaModel out = refit_under_mixture(data, std::move(stage1), std::move(gmm.mixture), options.fa);
  out.mixture_log_likelihood = gmm.log_likelihood;
  return out;
}

MogFaModel fit_mog_fa(const Eigen::MatrixXd& beats, const CovarianceMatrix& k, std::span<const NoisePrecision> taus,
                      Eigen::Index p, int components, Eigen::Index replicates, const MogFaOptions& options) {
  MogFaOptions opts = options;
  opts.gmm.components = components;
  return fit_mog_fa(FaData::from_rows(beats, k, taus, replicates), p, opts);
}

Eigen::VectorXd mog_fa_responsibilities(const MogFaModel& model, const Eigen::VectorXd& white_row, double noise_var) {
  return row_posterior(model.fa, model.mixture, white_row, noise_var).responsibilities;
}

Eigen::VectorXd mog_fa_posterior_mean(const MogFaModel& model, const Eigen::VectorXd& beat_mean,
                                      Eigen::Index replicates, const CovarianceMatrix& k, NoisePrecision tau,
                                      MixtureWeighting weighting, ResidualTreatment residual) {
  require(replicates >= 1, "mog_fa_posterior_mean: replicates must be >= 1");
  require(beat_mean.size() == model.fa.dim() && k.dim() == model.fa.dim(), "mog_fa_posterior_mean: dimension mismatch");
  const double noise_var = tau.variance() / static_cast<double>(replicates);
  const Eigen::VectorXd white = whiten(k, beat_mean, model.fa.mean);
  const RowPosterior post = row_posterior(model.fa, model.mixture, white, noise_var);
  Eigen::VectorXd latent = post.latent_mean;
  if (weighting == MixtureWeighting::kPrior) {
    latent.setZero();
    for (std::size_t c = 0; c < post.component_means.size(); ++c) {
      latent += model.mixture.weights[c] * post.component_means[c];
    }
  }
  return model.fa.mean + unwhiten(k, white_signal_mean(model.fa, white, noise_var, latent, residual));
}

Eigen::VectorXd mog_fa_posterior_mean(const MogFaModel& model, const EcgSample& sample, const CovarianceMatrix& k,
                                      NoisePrecision tau, MixtureWeighting weighting, ResidualTreatment residual) {
  sample.validate();
  return mog_fa_posterior_mean(model, sample.beat_mean(), sample.num_beats(), k, tau, weighting, residual);
}

}  // namespace ecgfa
