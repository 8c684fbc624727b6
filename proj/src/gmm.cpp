#include "ecgfa/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ecgfa/error.hpp"
#include "ecgfa/rng.hpp"

namespace ecgfa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd regularize(Eigen::MatrixXd cov, double ridge_fraction) {
  const auto p = static_cast<double>(cov.rows());
  cov = 0.5 * (cov + cov.transpose());
  const double ridge = std::max(ridge_fraction * cov.trace() / p, 1e-300);
  cov.diagonal().array() += ridge;
  return cov;
}

// N x C matrix of log pi_c + log N(x_i | mu_c, Sigma_c).
Eigen::MatrixXd log_joint(const LatentMixture& mix, const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  const Eigen::Index p = points.cols();
  Eigen::MatrixXd out(n, mix.components());
  for (Eigen::Index c = 0; c < mix.components(); ++c) {
    const auto uc = static_cast<std::size_t>(c);
    Eigen::LLT<Eigen::MatrixXd> llt(mix.covariances[uc]);
    if (llt.info() != Eigen::Success) fail(ErrorCode::kFitDiverged, "gmm: component covariance is not positive definite");
    const Eigen::MatrixXd lower = llt.matrixL();
    const double log_det = 2.0 * lower.diagonal().array().log().sum();
    const Eigen::MatrixXd centred = (points.rowwise() - mix.means[uc].transpose()).transpose();
    const Eigen::MatrixXd solved = llt.matrixL().solve(centred);
    const double log_w = mix.weights[uc] > 0.0 ? std::log(mix.weights[uc]) : -std::numeric_limits<double>::infinity();
    out.col(c) = (log_w - 0.5 * (static_cast<double>(p) * kLog2Pi + log_det +
                                  solved.colwise().squaredNorm().array()))
                     .matrix()
                     .transpose();
  }
  return out;
}

Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd top = m.rowwise().maxCoeff();
  return top.array() + (m.colwise() - top).array().exp().rowwise().sum().log();
}

Eigen::MatrixXd covariance_of(const Eigen::MatrixXd& points) {
  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Eigen::MatrixXd centred = points.rowwise() - mean;
  return centred.transpose() * centred / static_cast<double>(points.rows());
}

std::vector<Eigen::Index> kmeans_pp(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  std::vector<Eigen::Index> centres;
  centres.push_back(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Eigen::VectorXd dist = (points.rowwise() - points.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < k) {
    const double total = dist.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> draw(dist.data(), dist.data() + n);
      pick = draw(rng);
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    centres.push_back(pick);
    dist = dist.cwiseMin((points.rowwise() - points.row(pick)).rowwise().squaredNorm());
  }
  return centres;
}

GmmFit single_run(const Eigen::MatrixXd& points, const GmmOptions& opt, Rng& rng) {
  const Eigen::Index n = points.rows();
  const int k = opt.components;
  const Eigen::MatrixXd global_cov = regularize(covariance_of(points), opt.ridge_fraction);

  LatentMixture mix;
  for (Eigen::Index idx : kmeans_pp(points, k, rng)) {
    mix.weights.push_back(1.0 / k);
    mix.means.emplace_back(points.row(idx).transpose());
    mix.covariances.push_back(global_cov);
  }

  GmmFit fit;
  double previous = -std::numeric_limits<double>::infinity();
  int reinits = 0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    const Eigen::MatrixXd lj = log_joint(mix, points);
    const Eigen::VectorXd lse = row_logsumexp(lj);
    const double ll = lse.sum();
    if (!std::isfinite(ll)) fail(ErrorCode::kFitDiverged, "gmm: non-finite log-likelihood");
    fit.log_likelihood = ll;
    fit.iterations = iter + 1;
    if (iter > 0 && std::abs(ll - previous) < opt.relative_tolerance * std::abs(ll)) break;
    previous = ll;

    const Eigen::MatrixXd resp = (lj.colwise() - lse).array().exp().matrix();
    const Eigen::VectorXd mass = resp.colwise().sum().transpose();
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      if (mass[c] < opt.empty_mass) {
        if (++reinits > opt.max_reinitializations) {
          fail(ErrorCode::kEmptyComponent, "gmm: component " + std::to_string(c) + " stayed empty after " +
                                               std::to_string(opt.max_reinitializations) + " re-seedings");
        }
        mix.means[uc] = points.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng)).transpose();
        mix.covariances[uc] = global_cov;
        mix.weights[uc] = 1.0 / k;
        reseeded = true;
        continue;
      }
      const Eigen::VectorXd r = resp.col(c);
      const Eigen::VectorXd mean = points.transpose() * r / mass[c];
      const Eigen::MatrixXd centred = points.rowwise() - mean.transpose();
      const Eigen::MatrixXd cov = centred.transpose() * (centred.array().colwise() * r.array()).matrix() / mass[c];
      mix.means[uc] = mean;
      mix.covariances[uc] = regularize(cov, opt.ridge_fraction);
      mix.weights[uc] = mass[c] / static_cast<double>(n);
    }
    double total = 0.0;
    for (double w : mix.weights) total += w;
    for (double& w : mix.weights) w /= total;
    if (reseeded) previous = -std::numeric_limits<double>::infinity();
  }
  fit.mixture = std::move(mix);
  return fit;
}

}  // namespace

Eigen::VectorXd gmm_log_density(const LatentMixture& mixture, const Eigen::MatrixXd& points) {
  mixture.validate();
  require(points.cols() == mixture.latent_dim(), "gmm: point dimension differs from mixture");
  return row_logsumexp(log_joint(mixture, points));
}

GmmFit fit_gmm(const Eigen::MatrixXd& points, const GmmOptions& options, std::uint64_t seed) {
  require(options.components >= 1, "gmm: components must be >= 1");
  require(options.restarts >= 1, "gmm: restarts must be >= 1");
  require(points.rows() >= options.components, "gmm: needs N >= C points");
  require(points.cols() >= 1 && points.allFinite(), "gmm: points must be finite and non-empty");

  GmmFit best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    GmmFit fit = single_run(points, options, rng);
    if (fit.log_likelihood > best.log_likelihood) {
      fit.restart = r;
      best = std::move(fit);
    }
  }
  return best;
}

}  // namespace ecgfa
