#include "ecgfa/factor_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ecgfa/error.hpp"

namespace ecgfa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

struct PreparedPrior {
  std::vector<double> log_weights;
  std::vector<Eigen::MatrixXd> precisions;
  std::vector<double> log_dets;
};

PreparedPrior prepare(const LatentMixture& prior) {
  prior.validate();
  PreparedPrior out;
  for (Eigen::Index c = 0; c < prior.components(); ++c) {
    const auto& cov = prior.covariances[static_cast<std::size_t>(c)];
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) fail(ErrorCode::kFitDiverged, "factor analysis: latent covariance is not positive definite");
    const Eigen::MatrixXd lower = llt.matrixL();
    out.log_dets.push_back(2.0 * lower.diagonal().array().log().sum());
    out.precisions.push_back(llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols())));
    const double w = prior.weights[static_cast<std::size_t>(c)];
    out.log_weights.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
  }
  return out;
}

RowPosterior posterior_impl(const Eigen::MatrixXd& loadings, const Eigen::VectorXd& noise_diag,
                            const LatentMixture& prior, const PreparedPrior& prep, const Eigen::VectorXd& x,
                            double noise_var, bool keep_components) {
  const Eigen::Index d = loadings.rows();
  const Eigen::Index p = loadings.cols();
  const Eigen::ArrayXd diag = noise_diag.array() + noise_var;
  const Eigen::ArrayXd inv = diag.inverse();

  const Eigen::MatrixXd lw = loadings.array().colwise() * inv;  // D^{-1} L
  const Eigen::MatrixXd m = loadings.transpose() * lw;            // L^T D^{-1} L
  const Eigen::VectorXd bx = lw.transpose() * x;                  // L^T D^{-1} x
  const double x_dx = (x.array().square() * inv).sum();
  const double log_det_d = diag.log().sum();

  const auto num = static_cast<std::size_t>(prior.components());
  RowPosterior out;
  out.responsibilities.resize(prior.components());
  out.component_means.resize(num);
  out.component_covs.resize(num);
  Eigen::VectorXd log_comp(prior.components());

  for (std::size_t c = 0; c < num; ++c) {
    const Eigen::VectorXd& mu = prior.means[c];
    Eigen::LLT<Eigen::MatrixXd> llt(prep.precisions[c] + m);
    if (llt.info() != Eigen::Success) fail(ErrorCode::kFitDiverged, "factor analysis: posterior precision is singular");
    const Eigen::MatrixXd lower = llt.matrixL();
    const Eigen::VectorXd bc = bx - m * mu;
    const Eigen::VectorXd shift = llt.solve(bc);
    // (x - L mu)^T Sigma_x^{-1} (x - L mu) via Woodbury.
    const double quad = x_dx - 2.0 * mu.dot(bx) + mu.dot(m * mu) - bc.dot(shift);
    const double log_det = log_det_d + prep.log_dets[c] + 2.0 * lower.diagonal().array().log().sum();
    log_comp[static_cast<Eigen::Index>(c)] =
        prep.log_weights[c] - 0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
    out.component_means[c] = mu + shift;
    out.component_covs[c] = llt.solve(Eigen::MatrixXd::Identity(p, p));
  }

  const double top = log_comp.maxCoeff();
  const Eigen::ArrayXd scaled = (log_comp.array() - top).exp();
  const double total = scaled.sum();
  out.log_likelihood = top + std::log(total);
  out.responsibilities = scaled / total;

  out.latent_mean = Eigen::VectorXd::Zero(p);
  for (std::size_t c = 0; c < num; ++c) {
    out.latent_mean += out.responsibilities[static_cast<Eigen::Index>(c)] * out.component_means[c];
  }
  if (!keep_components) {
    out.component_covs.clear();
  }
  return out;
}

}  // namespace

FaData FaData::from_rows(const Eigen::MatrixXd& rows, const CovarianceMatrix& k, std::span<const NoisePrecision> taus,
                         Eigen::Index replicates) {
  require(rows.rows() >= 2, "factor analysis: needs N >= 2 rows");
  require(rows.cols() == k.dim(), "factor analysis: row length differs from covariance dimension");
  require(static_cast<Eigen::Index>(taus.size()) == rows.rows(), "factor analysis: one tau per row required");
  require(replicates >= 1, "factor analysis: replicates must be >= 1");
  require(rows.allFinite(), "factor analysis: rows must be finite");
  FaData out;
  out.mean = rows.colwise().mean().transpose();
  out.white = whiten_rows(k, rows, out.mean);
  out.noise_var.resize(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.noise_var[i] = taus[static_cast<std::size_t>(i)].variance() / static_cast<double>(replicates);
  }
  return out;
}

FaData FaData::from_samples(std::span<const EcgSample> samples, const CovarianceMatrix& k,
                            std::span<const NoisePrecision> taus) {
  require(samples.size() >= 2, "factor analysis: needs N >= 2 samples");
  require(taus.size() == samples.size(), "factor analysis: one tau per sample required");
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd rows(n, k.dim());
  Eigen::VectorXd noise(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    s.validate();
    require(s.dim() == k.dim(), "factor analysis: sample length differs from covariance dimension");
    rows.row(i) = s.beats.colwise().mean();
    noise[i] = taus[static_cast<std::size_t>(i)].variance() / static_cast<double>(s.num_beats());
  }
  FaData out;
  out.mean = rows.colwise().mean().transpose();
  out.white = whiten_rows(k, rows, out.mean);
  out.noise_var = std::move(noise);
  return out;
}

Eigen::VectorXd FaData::covariance_eigenvalues() const {
  const Eigen::MatrixXd cov = (white.transpose() * white) / static_cast<double>(size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = eig.eigenvalues().reverse();
  return ev.cwiseMax(0.0);
}

void FaModel::validate() const {
  require(loadings.rows() >= 1 && loadings.cols() >= 1, "FaModel: empty loadings");
  require(latent_dim() <= dim(), "FaModel: latent dimension exceeds d");
  require(mean.size() == dim() && noise_diag.size() == dim(), "FaModel: inconsistent dimensions");
  require((noise_diag.array() > 0.0).all(), "FaModel: noise diagonal must be positive");
}

LatentMixture LatentMixture::standard_normal(Eigen::Index p) {
  LatentMixture out;
  out.weights = {1.0};
  out.means = {Eigen::VectorXd::Zero(p)};
  out.covariances = {Eigen::MatrixXd::Identity(p, p)};
  return out;
}

void LatentMixture::validate() const {
  require(!weights.empty(), "LatentMixture: needs at least one component");
  require(means.size() == weights.size() && covariances.size() == weights.size(),
          "LatentMixture: inconsistent component counts");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "LatentMixture: weights must be finite and >= 0");
    total += w;
  }
  require(std::abs(total - 1.0) < 1e-9, "LatentMixture: weights must sum to 1");
  for (std::size_t c = 0; c < weights.size(); ++c) {
    require(means[c].size() == latent_dim() && covariances[c].rows() == latent_dim() &&
                covariances[c].cols() == latent_dim(),
            "LatentMixture: component dimensions differ");
  }
}

RowPosterior row_posterior(const FaModel& model, const LatentMixture& prior, const Eigen::VectorXd& white_row,
                           double noise_var) {
  require(white_row.size() == model.dim(), "row_posterior: dimension mismatch");
  require(prior.latent_dim() == model.latent_dim(), "row_posterior: prior latent dimension differs from model");
  return posterior_impl(model.loadings, model.noise_diag, prior, prepare(prior), white_row, noise_var, true);
}

FaModel initial_fa_model(const FaData& data, Eigen::Index p, double variance_floor) {
  const Eigen::Index d = data.dim();
  require(p >= 1, "factor analysis: latent dimension p must be >= 1");
  if (p > d) fail(ErrorCode::kInvalidArgument, "factor analysis: p = " + std::to_string(p) + " exceeds d = " + std::to_string(d));
  const Eigen::MatrixXd cov = (data.white.transpose() * data.white) / static_cast<double>(data.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double mean_noise = data.noise_var.mean();

  FaModel model;
  model.mean = data.mean;
  model.loadings.resize(d, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const Eigen::Index src = d - 1 - k;  // eigenvalues ascend
    const double scale = std::sqrt(std::max(eig.eigenvalues()[src] - mean_noise, variance_floor));
    model.loadings.col(k) = eig.eigenvectors().col(src) * scale;
  }
  model.noise_diag =
      (cov.diagonal() - model.loadings.rowwise().squaredNorm()).array() - mean_noise;
  model.noise_diag = model.noise_diag.cwiseMax(variance_floor);
  return model;
}

FaModel fit_loadings_em(const FaData& data, FaModel model, const LatentMixture& prior, const FaFitOptions& options) {
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  const Eigen::Index p = model.latent_dim();
  require(model.dim() == d, "factor analysis: model dimension differs from data");
  require(prior.latent_dim() == p, "factor analysis: prior latent dimension differs from model");
  require(options.max_iterations >= 1, "factor analysis: max_iterations must be >= 1");
  const PreparedPrior prep = prepare(prior);
  const Eigen::MatrixXd& x = data.white;
  const Eigen::ArrayXd s = data.noise_var.array();
  if (options.isotropic_residual) model.noise_diag.setConstant(model.noise_diag.mean());

  Eigen::MatrixXd ez(n, p);
  Eigen::MatrixXd ezz(n, p * p);  // row i holds vec(E[z z^T]) column-major
  double previous = -std::numeric_limits<double>::infinity();
  model.converged = false;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // E-step.
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const RowPosterior post =
          posterior_impl(model.loadings, model.noise_diag, prior, prep, x.row(i).transpose(), s[i], true);
      ll += post.log_likelihood;
      ez.row(i) = post.latent_mean.transpose();
      Eigen::MatrixXd second = Eigen::MatrixXd::Zero(p, p);
      for (Eigen::Index c = 0; c < post.responsibilities.size(); ++c) {
        const auto& mc = post.component_means[static_cast<std::size_t>(c)];
        second += post.responsibilities[c] * (post.component_covs[static_cast<std::size_t>(c)] + mc * mc.transpose());
      }
      ezz.row(i) = Eigen::Map<const Eigen::RowVectorXd>(second.data(), p * p);
    }
    if (!std::isfinite(ll)) {
      fail(ErrorCode::kFitDiverged, "factor analysis: non-finite log-likelihood at iteration " + std::to_string(iter));
    }
    model.log_likelihood.push_back(ll);
    model.iterations = iter + 1;
    if (iter > 0 && ll - previous < options.relative_tolerance * std::abs(ll)) {
      model.converged = true;
      break;
    }
    previous = ll;

    // M-step: loadings row j solves (sum_i w_ij E[zz^T]_i) l_j = sum_i w_ij x_ij E[z]_i.
    const Eigen::MatrixXd w = (1.0 / (s.matrix() * Eigen::RowVectorXd::Ones(d) +
                                      Eigen::VectorXd::Ones(n) * model.noise_diag.transpose()).array())
                                  .matrix();  // N x d
    const Eigen::MatrixXd lhs = w.transpose() * ezz;                         // d x p^2
    const Eigen::MatrixXd rhs = (x.array() * w.array()).matrix().transpose() * ez;  // d x p
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::RowVectorXd packed = lhs.row(j);
      const Eigen::Map<const Eigen::MatrixXd> a(packed.data(), p, p);
      model.loadings.row(j) = a.ldlt().solve(rhs.row(j).transpose()).transpose();
    }

    // q_ij = E[(x_ij - l_j^T z_i)^2].
    Eigen::MatrixXd outer(d, p * p);
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::VectorXd l = model.loadings.row(j).transpose();
      const Eigen::MatrixXd ll_outer = l * l.transpose();
      outer.row(j) = Eigen::Map<const Eigen::RowVectorXd>(ll_outer.data(), p * p);
    }
    const Eigen::ArrayXXd q =
        (x.array().square() - 2.0 * x.array() * (ez * model.loadings.transpose()).array() +
         (ezz * outer.transpose()).array())
            .max(0.0);

    // Residual variances: EM on u_ij given the z moments (monotone in Q).
    // A shared value takes the mean of the per-coordinate updates.
    for (int sub = 0; sub < options.variance_substeps; ++sub) {
      Eigen::VectorXd updated(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double psi = model.noise_diag[j];
        const Eigen::ArrayXd shrink = psi / (psi + s);
        updated[j] = (shrink.square() * q.col(j) + psi * s / (psi + s)).mean();
      }
      if (options.isotropic_residual) updated.setConstant(updated.mean());
      model.noise_diag = updated.cwiseMax(options.variance_floor);
    }
  }
  return model;
}

FaModel fit_factor_analysis(const FaData& data, Eigen::Index p, const FaFitOptions& options) {
  FaModel init = initial_fa_model(data, p, options.variance_floor);
  return fit_loadings_em(data, std::move(init), LatentMixture::standard_normal(p), options);
}

FaModel fit_factor_analysis(const Eigen::MatrixXd& beats, const CovarianceMatrix& k,
                            std::span<const NoisePrecision> taus, Eigen::Index p, Eigen::Index replicates,
                            const FaFitOptions& options) {
  return fit_factor_analysis(FaData::from_rows(beats, k, taus, replicates), p, options);
}

Eigen::VectorXd white_signal_mean(const FaModel& model, const Eigen::VectorXd& white_row, double noise_var,
                                  const Eigen::VectorXd& latent_mean, ResidualTreatment residual) {
  const Eigen::VectorXd fitted = model.loadings * latent_mean;
  if (residual == ResidualTreatment::kNoise) return fitted;
  const Eigen::ArrayXd keep = model.noise_diag.array() / (model.noise_diag.array() + noise_var);
  return fitted + (keep * (white_row - fitted).array()).matrix();
}

Eigen::VectorXd fa_posterior_mean(const FaModel& model, const Eigen::VectorXd& beat_mean, Eigen::Index replicates,
                                  const CovarianceMatrix& k, NoisePrecision tau, ResidualTreatment residual) {
  require(replicates >= 1, "fa_posterior_mean: replicates must be >= 1");
  require(beat_mean.size() == model.dim() && k.dim() == model.dim(), "fa_posterior_mean: dimension mismatch");
  const double noise_var = tau.variance() / static_cast<double>(replicates);
  const Eigen::VectorXd white = whiten(k, beat_mean, model.mean);
  const RowPosterior post = row_posterior(model, LatentMixture::standard_normal(model.latent_dim()), white, noise_var);
  return model.mean + unwhiten(k, white_signal_mean(model, white, noise_var, post.latent_mean, residual));
}

Eigen::VectorXd fa_posterior_mean(const FaModel& model, const EcgSample& sample, const CovarianceMatrix& k,
                                  NoisePrecision tau, ResidualTreatment residual) {
  sample.validate();
  return fa_posterior_mean(model, sample.beat_mean(), sample.num_beats(), k, tau, residual);
}

}  // namespace ecgfa
