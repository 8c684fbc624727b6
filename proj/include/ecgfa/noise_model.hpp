#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/ecg_sim.hpp"

namespace ecgfa {

// Symmetric PSD covariance with cached spectral square roots.
//
// Eigenvalues below 1e-10 * trace / d are floored before the square roots are
// formed; matrix() still returns the (trace-normalized) input.
class CovarianceMatrix {
 public:
  CovarianceMatrix() = default;

  // Validates symmetry and PSD-ness, optionally rescales to trace d, and
  // caches K^{1/2} and K^{-1/2}.
  static CovarianceMatrix from_matrix(const Eigen::MatrixXd& k, bool normalize_trace = true);
  static CovarianceMatrix identity(Eigen::Index d);

  [[nodiscard]] Eigen::Index dim() const { return matrix_.rows(); }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return matrix_; }
  [[nodiscard]] const Eigen::MatrixXd& sqrt() const { return sqrt_; }
  [[nodiscard]] const Eigen::MatrixXd& inv_sqrt() const { return inv_sqrt_; }
  // Ascending, before flooring.
  [[nodiscard]] const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  [[nodiscard]] const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  [[nodiscard]] double eigenvalue_floor() const { return floor_; }
  // K with the eigenvalue floor applied; equals sqrt() * sqrt().
  [[nodiscard]] Eigen::MatrixXd floored_matrix() const { return sqrt_ * sqrt_; }
  [[nodiscard]] double trace() const { return matrix_.trace(); }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd sqrt_;
  Eigen::MatrixXd inv_sqrt_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  double floor_ = 0.0;
};

// Noise precision tau > 0; the per-sample noise covariance is K / tau^2.
class NoisePrecision {
 public:
  NoisePrecision() = default;
  explicit NoisePrecision(double tau);

  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] double sigma() const { return 1.0 / tau_; }
  [[nodiscard]] double variance() const { return 1.0 / (tau_ * tau_); }

  friend bool operator==(const NoisePrecision&, const NoisePrecision&) = default;

 private:
  double tau_ = 1.0;
};

// One recording: B aligned beats of length d.
struct EcgSample {
  std::string id;
  Eigen::MatrixXd beats;  // B x d, mV
  std::optional<ThetaBeat> truth;
  std::optional<NoisePrecision> true_precision;

  [[nodiscard]] Eigen::Index num_beats() const { return beats.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return beats.cols(); }
  [[nodiscard]] Eigen::VectorXd beat_mean() const;
  void validate() const;
};

enum class MaternSmoothness { kHalf, kThreeHalves, kFiveHalves };

// Accepts 0.5, 1.5, 2.5; otherwise kUnsupportedSmoothness.
MaternSmoothness parse_smoothness(double nu);
double smoothness_value(MaternSmoothness nu);

// Matern kernel with unit variance at lag r (seconds).
double matern_kernel(double lag_s, double lengthscale_s, MaternSmoothness nu);

CovarianceMatrix matern_covariance(Eigen::Index d, double fs, double lengthscale_s,
                                   MaternSmoothness nu);
inline CovarianceMatrix matern_covariance(Eigen::Index d, double fs, double lengthscale_s,
                                          double nu) {
  return matern_covariance(d, fs, lengthscale_s, parse_smoothness(nu));
}

// B x d matrix with rows i.i.d. N(0, K / tau^2).
Eigen::MatrixXd sample_noise_beats(const CovarianceMatrix& k, NoisePrecision tau, Eigen::Index beats,
                                   std::uint64_t seed);

struct NoiseEstimate {
  CovarianceMatrix covariance;          // K hat, trace d
  std::vector<NoisePrecision> precisions;  // tau hat per sample
  double total_scatter_trace = 0.0;     // S hat
};

// Per-sample residual scatter around the sample's beat mean.
struct ScatterStats {
  Eigen::MatrixXd scatter;  // C_i = R^T R / (B - 1)
  Eigen::Index beats = 0;
};

ScatterStats residual_scatter(const EcgSample& sample);

// Pools residual scatter across samples into K hat (trace d) and estimates each
// tau_i from tr(W C_i W) / tr(W K hat W), W = (K hat + ridge I)^{-1/2}. Without
// the ridge the denominator is d.
NoiseEstimate estimate_noise(std::span<const EcgSample> samples);

// sigma^2 from C_i given a fitted K hat (ridge applied internally).
double estimate_sigma2(const CovarianceMatrix& k_hat, const Eigen::MatrixXd& scatter);

Eigen::VectorXd whiten(const CovarianceMatrix& k, const Eigen::VectorXd& x, const Eigen::VectorXd& mu);
Eigen::VectorXd unwhiten(const CovarianceMatrix& k, const Eigen::VectorXd& x_white);

// Row-wise versions: each row r maps to K^{-1/2}(r - mu) / K^{1/2} r.
Eigen::MatrixXd whiten_rows(const CovarianceMatrix& k, const Eigen::MatrixXd& rows, const Eigen::VectorXd& mu);
Eigen::MatrixXd unwhiten_rows(const CovarianceMatrix& k, const Eigen::MatrixXd& rows_white);

}  // namespace ecgfa
