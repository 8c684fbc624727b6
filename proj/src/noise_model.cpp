#include "ecgfa/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ecgfa/error.hpp"
#include "ecgfa/rng.hpp"

namespace ecgfa {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kNegativeEigTol = 1e-10;
constexpr double kEigenFloor = 1e-10;
constexpr double kRidge = 1e-8;

// Inverse square root of (K + ridge * I) using K's cached eigenbasis.
Eigen::MatrixXd ridged_inv_sqrt(const CovarianceMatrix& k) {
  const double ridge = kRidge * k.trace() / static_cast<double>(k.dim());
  Eigen::VectorXd inv = (k.eigenvalues().array().max(k.eigenvalue_floor()) + ridge).rsqrt();
  return k.eigenvectors() * inv.asDiagonal() * k.eigenvectors().transpose();
}

// tr(W K W) for W = ridged_inv_sqrt(k): the value tr(W C W) takes when C = K.
// Equals d without the ridge; smaller when part of the spectrum sits below it.
double ridged_effective_dim(const CovarianceMatrix& k) {
  const double ridge = kRidge * k.trace() / static_cast<double>(k.dim());
  const Eigen::ArrayXd ev = k.eigenvalues().array().max(0.0);
  return (ev / (ev.max(k.eigenvalue_floor()) + ridge)).sum();
}

}  // namespace

CovarianceMatrix CovarianceMatrix::from_matrix(const Eigen::MatrixXd& k, bool normalize_trace) {
  require(k.rows() >= 1 && k.rows() == k.cols(), "CovarianceMatrix: matrix must be square and non-empty");
  require(k.allFinite(), "CovarianceMatrix: entries must be finite");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  require((k - k.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * scale,
          "CovarianceMatrix: matrix is not symmetric");
  const auto d = static_cast<double>(k.rows());
  const double tr = k.trace();
  require(tr > 0.0, "CovarianceMatrix: trace must be positive");

  CovarianceMatrix out;
  out.matrix_ = 0.5 * (k + k.transpose());
  if (normalize_trace) out.matrix_ *= d / tr;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.matrix_);
  if (eig.info() != Eigen::Success) fail(ErrorCode::kInvalidArgument, "CovarianceMatrix: eigendecomposition failed");
  out.eigenvalues_ = eig.eigenvalues();
  out.eigenvectors_ = eig.eigenvectors();
  const double mean_diag = out.matrix_.trace() / d;
  require(out.eigenvalues_.minCoeff() >= -kNegativeEigTol * std::max(1.0, mean_diag),
          "CovarianceMatrix: matrix is not positive semidefinite");

  out.floor_ = kEigenFloor * mean_diag;
  const Eigen::ArrayXd floored = out.eigenvalues_.array().max(out.floor_);
  const Eigen::MatrixXd& v = out.eigenvectors_;
  out.sqrt_ = v * floored.sqrt().matrix().asDiagonal() * v.transpose();
  out.inv_sqrt_ = v * floored.rsqrt().matrix().asDiagonal() * v.transpose();
  return out;
}

CovarianceMatrix CovarianceMatrix::identity(Eigen::Index d) {
  return from_matrix(Eigen::MatrixXd::Identity(d, d), false);
}

NoisePrecision::NoisePrecision(double tau) : tau_(tau) {
  require(std::isfinite(tau) && tau > 0.0, "NoisePrecision: tau must be finite and > 0");
}

Eigen::VectorXd EcgSample::beat_mean() const { return beats.colwise().mean().transpose(); }

void EcgSample::validate() const {
  require(beats.rows() >= 1, "EcgSample " + id + ": needs at least one beat");
  require(beats.cols() >= 1, "EcgSample " + id + ": beats must have d >= 1");
  require(beats.allFinite(), "EcgSample " + id + ": beats must be finite");
  if (truth) require(truth->length() == beats.cols(), "EcgSample " + id + ": truth length differs from d");
}

MaternSmoothness parse_smoothness(double nu) {
  if (nu == 0.5) return MaternSmoothness::kHalf;
  if (nu == 1.5) return MaternSmoothness::kThreeHalves;
  if (nu == 2.5) return MaternSmoothness::kFiveHalves;
  fail(ErrorCode::kUnsupportedSmoothness,
       "matern: unsupported smoothness " + std::to_string(nu) + "; supported values are 0.5, 1.5, 2.5");
}

double smoothness_value(MaternSmoothness nu) {
  switch (nu) {
    case MaternSmoothness::kHalf: return 0.5;
    case MaternSmoothness::kThreeHalves: return 1.5;
    case MaternSmoothness::kFiveHalves: return 2.5;
  }
  return 0.0;
}

double matern_kernel(double lag_s, double lengthscale_s, MaternSmoothness nu) {
  const double r = std::abs(lag_s);
  if (r == 0.0) return 1.0;
  const double base = r / lengthscale_s;
  if (!(base < 1e3)) return 0.0;
  switch (nu) {
    case MaternSmoothness::kHalf:
      return std::exp(-base);
    case MaternSmoothness::kThreeHalves: {
      const double q = std::sqrt(3.0) * base;
      return (1.0 + q) * std::exp(-q);
    }
    case MaternSmoothness::kFiveHalves: {
      const double q = std::sqrt(5.0) * base;
      return (1.0 + q + q * q / 3.0) * std::exp(-q);
    }
  }
  return 0.0;
}

CovarianceMatrix matern_covariance(Eigen::Index d, double fs, double lengthscale_s, MaternSmoothness nu) {
  require(d >= 1, "matern_covariance: d must be >= 1");
  require(std::isfinite(fs) && fs > 0.0, "matern_covariance: fs must be > 0");
  require(std::isfinite(lengthscale_s) && lengthscale_s > 0.0, "matern_covariance: lengthscale must be > 0");
  // Stationary: one kernel evaluation per lag.
  Eigen::VectorXd by_lag(d);
  for (Eigen::Index lag = 0; lag < d; ++lag) {
    by_lag[lag] = matern_kernel(static_cast<double>(lag) / fs, lengthscale_s, nu);
  }
  Eigen::MatrixXd k(d, d);
  for (Eigen::Index s = 0; s < d; ++s) {
    for (Eigen::Index t = 0; t < d; ++t) k(s, t) = by_lag[std::abs(s - t)];
  }
  return CovarianceMatrix::from_matrix(k, true);
}

Eigen::MatrixXd sample_noise_beats(const CovarianceMatrix& k, NoisePrecision tau, Eigen::Index beats,
                                   std::uint64_t seed) {
  require(beats >= 1, "sample_noise_beats: B must be >= 1");
  require(k.dim() >= 1, "sample_noise_beats: covariance is empty");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(beats, k.dim());
  for (Eigen::Index b = 0; b < beats; ++b) {
    for (Eigen::Index j = 0; j < k.dim(); ++j) z(b, j) = normal(rng);
  }
  // Rows of Z K^{1/2} have covariance K (K^{1/2} symmetric).
  return (z * k.sqrt()) * tau.sigma();
}

ScatterStats residual_scatter(const EcgSample& sample) {
  sample.validate();
  const Eigen::Index b = sample.num_beats();
  if (b < 2) {
    fail(ErrorCode::kInsufficientReplicates,
         "estimate_noise: sample " + sample.id + " has B = " + std::to_string(b) + " (< 2)");
  }
  const Eigen::MatrixXd resid = sample.beats.rowwise() - sample.beats.colwise().mean();
  // B residual rows span B - 1 dimensions; dividing by B - 1 makes C_i unbiased for K / tau^2.
  ScatterStats out;
  out.beats = b;
  out.scatter = (resid.transpose() * resid) / static_cast<double>(b - 1);
  return out;
}

double estimate_sigma2(const CovarianceMatrix& k_hat, const Eigen::MatrixXd& scatter) {
  require(scatter.rows() == k_hat.dim() && scatter.cols() == k_hat.dim(),
          "estimate_sigma2: scatter dimension mismatch");
  const Eigen::MatrixXd w = ridged_inv_sqrt(k_hat);
  return (w * scatter * w).trace() / ridged_effective_dim(k_hat);
}

NoiseEstimate estimate_noise(std::span<const EcgSample> samples) {
  require(!samples.empty(), "estimate_noise: no samples");
  const Eigen::Index d = samples.front().dim();

  // Pooled scatter, accumulated in sample order.
  std::vector<Eigen::MatrixXd> residuals;
  residuals.reserve(samples.size());
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);
  for (const auto& sample : samples) {
    sample.validate();
    if (sample.num_beats() < 2) {
      fail(ErrorCode::kInsufficientReplicates, "estimate_noise: sample " + sample.id + " has B = " +
                                                   std::to_string(sample.num_beats()) + " (< 2)");
    }
    if (sample.dim() != d) fail(ErrorCode::kLengthMismatch, "estimate_noise: samples differ in d");
    Eigen::MatrixXd resid = sample.beats.rowwise() - sample.beats.colwise().mean();
    resid /= std::sqrt(static_cast<double>(sample.num_beats() - 1));
    pooled.selfadjointView<Eigen::Lower>().rankUpdate(resid.transpose());
    residuals.push_back(std::move(resid));
  }
  pooled = pooled.selfadjointView<Eigen::Lower>();

  const double total = pooled.trace();
  if (!(total > 0.0)) {
    fail(ErrorCode::kZeroNoise, "estimate_noise: pooled residual scatter is zero; beats carry no noise");
  }

  NoiseEstimate out;
  out.total_scatter_trace = total;
  out.covariance = CovarianceMatrix::from_matrix(pooled * (static_cast<double>(d) / total), false);

  const Eigen::MatrixXd w = ridged_inv_sqrt(out.covariance);
  const double eff_dim = ridged_effective_dim(out.covariance);
  out.precisions.reserve(samples.size());
  for (const auto& resid : residuals) {
    // tr(W C_i W) = ||R_i W||_F^2 with R_i already scaled by 1/sqrt(B-1).
    const double sigma2 = (resid * w).squaredNorm() / eff_dim;
    if (!(sigma2 > 0.0)) fail(ErrorCode::kZeroNoise, "estimate_noise: a sample has zero residual scatter");
    out.precisions.emplace_back(1.0 / std::sqrt(sigma2));
  }
  return out;
}

Eigen::VectorXd whiten(const CovarianceMatrix& k, const Eigen::VectorXd& x, const Eigen::VectorXd& mu) {
  require(x.size() == k.dim() && mu.size() == k.dim(), "whiten: dimension mismatch");
  return k.inv_sqrt() * (x - mu);
}

Eigen::VectorXd unwhiten(const CovarianceMatrix& k, const Eigen::VectorXd& x_white) {
  require(x_white.size() == k.dim(), "unwhiten: dimension mismatch");
  return k.sqrt() * x_white;
}

Eigen::MatrixXd whiten_rows(const CovarianceMatrix& k, const Eigen::MatrixXd& rows, const Eigen::VectorXd& mu) {
  require(rows.cols() == k.dim() && mu.size() == k.dim(), "whiten_rows: dimension mismatch");
  return (rows.rowwise() - mu.transpose()) * k.inv_sqrt();
}

Eigen::MatrixXd unwhiten_rows(const CovarianceMatrix& k, const Eigen::MatrixXd& rows_white) {
  require(rows_white.cols() == k.dim(), "unwhiten_rows: dimension mismatch");
  return rows_white * k.sqrt();
}

}  // namespace ecgfa
