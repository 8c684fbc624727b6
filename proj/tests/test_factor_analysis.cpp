#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ecgfa/estimators.hpp"
#include "ecgfa/factor_analysis.hpp"
#include "ecgfa/rng.hpp"
#include "ecgfa/simulate.hpp"
#include "test_support.hpp"

using namespace ecgfa;
using ecgfa::test::check_error;

namespace {

struct Synthetic {
  Eigen::MatrixXd loadings;   // d x p, whitened units
  Eigen::VectorXd residual;   // diag(Psi)
  Eigen::MatrixXd theta;      // N x d, whitened signal
  Eigen::MatrixXd observed;   // N x d
  std::vector<NoisePrecision> taus;
};

// Draws x = L z + u + e in identity-covariance coordinates, e ~ N(0, I / tau_i^2).
Synthetic synthetic_fa(Eigen::Index n, Eigen::Index d, Eigen::Index p, std::uint64_t seed, double tau_lo,
                       double tau_hi) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> unif(tau_lo, tau_hi);
  Synthetic s;
  s.loadings.resize(d, p);
  for (Eigen::Index i = 0; i < s.loadings.size(); ++i) s.loadings.data()[i] = 2.0 * n01(rng);
  s.residual = Eigen::VectorXd::Constant(d, 0.05);
  s.theta.resize(n, d);
  s.observed.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd z(p), u(d), e(d);
    for (auto& v : z) v = n01(rng);
    const double tau = unif(rng);
    s.taus.emplace_back(tau);
    for (Eigen::Index j = 0; j < d; ++j) {
      u[j] = std::sqrt(s.residual[j]) * n01(rng);
      e[j] = n01(rng) / tau;
    }
    s.theta.row(i) = (s.loadings * z + u).transpose();
    s.observed.row(i) = s.theta.row(i) + e.transpose();
  }
  return s;
}

void check_monotone(const std::vector<double>& ll) {
  for (std::size_t t = 1; t < ll.size(); ++t) {
    CHECK_MESSAGE(ll[t] >= ll[t - 1] - 1e-9 * std::abs(ll[t - 1]), "iteration " << t);
  }
}

}  // namespace

TEST_CASE("loadings are recovered up to rotation") {
  const Synthetic s = synthetic_fa(4000, 20, 3, 1, 2.0, 4.0);
  const CovarianceMatrix id = CovarianceMatrix::identity(20);
  const FaModel m = fit_factor_analysis(s.observed, id, s.taus, 3);
  const Eigen::MatrixXd truth = s.loadings * s.loadings.transpose();
  const Eigen::MatrixXd fitted = m.loadings * m.loadings.transpose();
  const double err = (fitted - truth).norm() / truth.norm();
  MESSAGE("relative LL^T error " << err << " after " << m.iterations << " iterations");
  CHECK(err < 0.05);
  CHECK(m.noise_diag.mean() == doctest::Approx(0.05).epsilon(0.5));
  check_monotone(m.log_likelihood);
}

TEST_CASE("log-likelihood is non-decreasing on heteroscedastic data") {
  const Synthetic s = synthetic_fa(600, 30, 4, 2, 0.5, 10.0);
  const CovarianceMatrix id = CovarianceMatrix::identity(30);
  FaFitOptions opts;
  opts.relative_tolerance = 1e-14;
  opts.max_iterations = 300;
  const FaModel m = fit_factor_analysis(s.observed, id, s.taus, 6, 1, opts);
  CHECK(m.log_likelihood.size() > 20);
  check_monotone(m.log_likelihood);
}

TEST_CASE("row log-likelihood matches the dense Gaussian density") {
  const Synthetic s = synthetic_fa(200, 8, 2, 3, 1.0, 3.0);
  const FaModel m = fit_factor_analysis(s.observed, CovarianceMatrix::identity(8), s.taus, 2);
  const FaData data = FaData::from_rows(s.observed, CovarianceMatrix::identity(8), s.taus);
  const LatentMixture prior = LatentMixture::standard_normal(2);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double noise = data.noise_var[i];
    const Eigen::MatrixXd cov = m.loadings * m.loadings.transpose() +
                                Eigen::MatrixXd((m.noise_diag.array() + noise).matrix().asDiagonal());
    const Eigen::VectorXd x = data.white.row(i).transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd lower = llt.matrixL();
    const double logdet = 2.0 * lower.diagonal().array().log().sum();
    const double expected = -0.5 * (8.0 * std::log(2.0 * M_PI) + logdet + x.dot(llt.solve(x)));
    const RowPosterior post = row_posterior(m, prior, x, noise);
    CHECK(post.log_likelihood == doctest::Approx(expected).epsilon(1e-10));
    // Posterior mean of z: L^T Sigma^{-1} x.
    const Eigen::VectorXd z = m.loadings.transpose() * llt.solve(x);
    CHECK((post.latent_mean - z).norm() < 1e-9 * (1.0 + z.norm()));
  }
}

TEST_CASE("posterior mean: prior mean, vanishing-noise limit, large-noise limit") {
  const CovarianceMatrix k = matern_covariance(30, 500.0, 0.01, 1.5);
  Synthetic s = synthetic_fa(300, 30, 3, 4, 2.0, 20.0);
  const Eigen::MatrixXd beats = unwhiten_rows(k, s.observed);
  const FaModel m = fit_factor_analysis(beats, k, s.taus, 3, 20);

  CHECK((fa_posterior_mean(m, m.mean, 20, k, NoisePrecision(5.0)) - m.mean).norm() < 1e-12);

  const Eigen::VectorXd x = beats.row(7).transpose();
  // Residual as signal: vanishing noise returns the beat average itself.
  const Eigen::VectorXd sharp = fa_posterior_mean(m, x, 20, k, NoisePrecision(1e9), ResidualTreatment::kSignal);
  CHECK(std::sqrt((sharp - x).squaredNorm() / 30.0) < 1e-4);

  // Residual as noise: the limit is the GLS projection onto the loadings,
  // K^{1/2} L (L^T R^{-1} L + I)^{-1} L^T R^{-1} x~ with R = diag(residual).
  const Eigen::VectorXd xw = whiten(k, x, m.mean);
  const Eigen::MatrixXd rl = m.noise_diag.cwiseInverse().asDiagonal() * m.loadings;
  const Eigen::MatrixXd prec = m.loadings.transpose() * rl + Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd proj = m.mean + k.sqrt() * (m.loadings * prec.ldlt().solve(rl.transpose() * xw));
  const Eigen::VectorXd literal = fa_posterior_mean(m, x, 20, k, NoisePrecision(1e9));
  CHECK(std::sqrt((literal - proj).squaredNorm() / 30.0) < 1e-6);

  for (auto r : {ResidualTreatment::kNoise, ResidualTreatment::kSignal}) {
    const Eigen::VectorXd vague = fa_posterior_mean(m, x, 1, k, NoisePrecision(1e-6), r);
    CHECK(std::sqrt((vague - m.mean).squaredNorm() / 30.0) < 1e-4);
  }

  EcgSample sample{"s", Eigen::MatrixXd(2, 30), std::nullopt, std::nullopt};
  sample.beats.row(0) = x.transpose().array() + 0.1;
  sample.beats.row(1) = x.transpose().array() - 0.1;
  CHECK((fa_posterior_mean(m, sample, k, NoisePrecision(3.0)) - fa_posterior_mean(m, x, 2, k, NoisePrecision(3.0)))
            .norm() < 1e-12);
}

TEST_CASE("posterior mean contracts in whitened space and is affine") {
  const CovarianceMatrix k = matern_covariance(25, 500.0, 0.01, 2.5);
  const Synthetic s = synthetic_fa(400, 25, 3, 5, 2.0, 20.0);
  const Eigen::MatrixXd beats = unwhiten_rows(k, s.observed);
  const FaModel m = fit_factor_analysis(beats, k, s.taus, 3, 5);
  Rng rng(6);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  for (auto r : {ResidualTreatment::kNoise, ResidualTreatment::kSignal}) {
    for (Eigen::Index i = 0; i < 50; ++i) {
      const Eigen::VectorXd x = beats.row(i).transpose();
      const NoisePrecision tau = s.taus[static_cast<std::size_t>(i)];
      const Eigen::VectorXd est = fa_posterior_mean(m, x, 5, k, tau, r);
      CHECK(whiten(k, est, m.mean).norm() <= whiten(k, x, m.mean).norm() + 1e-12);

      const Eigen::VectorXd y = beats.row(i + 50).transpose();
      const double a = coef(rng);
      const Eigen::VectorXd combo = a * x + (1.0 - a) * y;
      const Eigen::VectorXd lhs = fa_posterior_mean(m, combo, 5, k, tau, r);
      const Eigen::VectorXd rhs = a * est + (1.0 - a) * fa_posterior_mean(m, y, 5, k, tau, r);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("more replicates never hurt on matched data") {
  // Same truth and noise stream; B = 20 uses a superset of the B = 5 beats.
  const Eigen::Index d = 25;
  const CovarianceMatrix k = matern_covariance(d, 500.0, 0.01, 1.5);
  const Synthetic s = synthetic_fa(500, d, 3, 7, 2.0, 2.0);
  const Eigen::MatrixXd theta = unwhiten_rows(k, s.theta);
  std::vector<NoisePrecision> taus(500, NoisePrecision(1.0));
  std::vector<double> mse_by_b;
  for (Eigen::Index b : {1, 5, 20}) {
    std::vector<EcgSample> samples;
    Eigen::MatrixXd means(500, d);
    for (Eigen::Index i = 0; i < 500; ++i) {
      Eigen::MatrixXd noise = sample_noise_beats(k, taus[0], 20, derive_seed(8, {static_cast<std::uint64_t>(i)}));
      EcgSample smp{"s", noise.topRows(b), std::nullopt, std::nullopt};
      smp.beats.rowwise() += theta.row(i);
      means.row(i) = smp.beat_mean().transpose();
      samples.push_back(std::move(smp));
    }
    const FaModel m = fit_factor_analysis(means, k, taus, 3, b);
    double total = 0.0;
    for (Eigen::Index i = 0; i < 500; ++i) {
      total += summed_squared_error(fa_posterior_mean(m, samples[static_cast<std::size_t>(i)], k, taus[0]),
                                    theta.row(i).transpose());
    }
    mse_by_b.push_back(total / 500.0);
  }
  MESSAGE("MSE by B: " << mse_by_b[0] << " " << mse_by_b[1] << " " << mse_by_b[2]);
  CHECK(mse_by_b[1] <= mse_by_b[0]);
  CHECK(mse_by_b[2] <= mse_by_b[1]);
}

TEST_CASE("argument and divergence errors") {
  const Synthetic s = synthetic_fa(50, 6, 2, 9, 2.0, 3.0);
  const CovarianceMatrix id = CovarianceMatrix::identity(6);
  check_error(ErrorCode::kInvalidArgument, [&] { fit_factor_analysis(s.observed, id, s.taus, 0); });
  check_error(ErrorCode::kInvalidArgument, [&] { fit_factor_analysis(s.observed, id, s.taus, 7); });
  check_error(ErrorCode::kInvalidArgument, [&] { fit_factor_analysis(s.observed.topRows(1), id, {s.taus.data(), 1}, 1); });

  FaData data = FaData::from_rows(s.observed, id, s.taus);
  data.noise_var[3] = std::nan("");
  check_error(ErrorCode::kFitDiverged, [&] { fit_factor_analysis(data, 2); });
}

TEST_CASE("p = d with vanishing noise reproduces the data") {
  const Synthetic s = synthetic_fa(100, 5, 2, 10, 1e9, 1e9);
  const CovarianceMatrix id = CovarianceMatrix::identity(5);
  const FaModel m = fit_factor_analysis(s.observed, id, s.taus, 5);
  for (Eigen::Index i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = s.observed.row(i).transpose();
    for (auto r : {ResidualTreatment::kNoise, ResidualTreatment::kSignal}) {
      CHECK((fa_posterior_mean(m, x, 1, id, s.taus[static_cast<std::size_t>(i)], r) - x).norm() < 1e-6);
    }
  }
}

TEST_CASE("scree spectrum is sorted descending") {
  const Synthetic s = synthetic_fa(300, 12, 3, 11, 5.0, 5.0);
  const FaData data = FaData::from_rows(s.observed, CovarianceMatrix::identity(12), s.taus);
  const Eigen::VectorXd ev = data.covariance_eigenvalues();
  for (Eigen::Index i = 1; i < ev.size(); ++i) CHECK(ev[i] <= ev[i - 1]);
  const std::vector<double> v(ev.data(), ev.data() + ev.size());
  CHECK(select_latent_dim(v, -0.8) >= 1);
}

TEST_CASE("isotropic residual ties the diagonal and keeps EM monotone") {
  SimulationSettings s;
  s.d = 40;
  s.r_offset = 15;
  s.seed = 21;
  const CovarianceMatrix k = s.true_covariance();
  const Dataset ds = simulate_dataset(s, 150, 5, TauRegime::uniform_between(2, 20));
  std::vector<NoisePrecision> taus;
  for (const auto& x : ds.samples) taus.push_back(*x.true_precision);
  const FaData data = FaData::from_samples(ds.samples, k, taus);

  FaFitOptions iso;
  const FaModel m = fit_factor_analysis(data, 3, iso);
  CHECK(m.noise_diag.maxCoeff() == m.noise_diag.minCoeff());
  for (std::size_t t = 1; t < m.log_likelihood.size(); ++t) {
    CHECK(m.log_likelihood[t] >= m.log_likelihood[t - 1] - 1e-9 * std::abs(m.log_likelihood[t - 1]));
  }
  FaFitOptions diag;
  diag.isotropic_residual = false;
  const FaModel free = fit_factor_analysis(data, 3, diag);
  CHECK(free.noise_diag.maxCoeff() > free.noise_diag.minCoeff());
  // The unconstrained fit reaches at least the constrained likelihood.
  CHECK(free.log_likelihood.back() >= m.log_likelihood.back() - 1e-6 * std::abs(m.log_likelihood.back()));
}
