// Acceptance run: one PASS/FAIL line per criterion, exit status = number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/bench.hpp"
#include "ecgfa/ecg_sim.hpp"
#include "ecgfa/factor_analysis.hpp"
#include "ecgfa/mog_fa.hpp"
#include "ecgfa/noise_model.hpp"
#include "ecgfa/rng.hpp"
#include "ecgfa/simulate.hpp"

using namespace ecgfa;

namespace {

// Pinned tolerances.
constexpr Eigen::Index kGridSamples = 1000;
constexpr double kMleRelTol = 0.05;
constexpr double kRefMleTau2B1 = 123.21;
constexpr double kRefMleTau2B20 = 6.21;
constexpr double kMaxRuntimeSeconds = 120.0;
constexpr double kOracleMinAccuracy = 0.995;
constexpr double kOracleMaxMse = 0.01;
constexpr double kOracleSingleLo = 0.05;
constexpr double kOracleSingleHi = 0.3;
constexpr double kFaOverMleMultiBeat = 0.5;
constexpr double kFaOverMleSingleBeat = 0.05;
constexpr double kRefFaTau2B20 = 1.35;
constexpr double kRefFaTau2B1 = 2.38;
constexpr double kRefRelTol = 0.30;
constexpr Eigen::Index kNoiseSamples = 500;
constexpr double kTraceTol = 1e-8;
constexpr double kKRelTol = 0.10;
constexpr double kTauRelTol = 0.10;
constexpr double kFaKnowledgeRelTol = 0.10;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kRoundTripTol = 1e-8;
constexpr double kSingleComponentRms = 1e-6;
constexpr double kAffineTol = 1e-10;
constexpr double kMinRk4Order = 3.5;
constexpr double kRadiusTol = 1e-3;
constexpr std::uint64_t kSeed = 0;

struct Line {
  std::ostringstream detail;
  bool ok = true;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, Line& line) {
  std::printf("criterion %d %s: %s%s\n", id, line.ok ? "PASS" : "FAIL", title.c_str(), line.detail.str().c_str());
  std::fflush(stdout);
  if (!line.ok) ++failures;
}

const EstimatorResult& result(const BenchmarkReport& r, const TauRegime& regime, Eigen::Index b,
                              const std::string& name) {
  const CellResult* cell = r.find(regime, b);
  if (cell == nullptr) throw std::runtime_error("missing cell " + regime.label());
  const EstimatorResult* e = cell->find(name);
  if (e == nullptr) throw std::runtime_error("missing estimator " + name);
  return *e;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<TauRegime> reference_taus() {
  return {TauRegime::fixed(2),  TauRegime::fixed(5),  TauRegime::fixed(10),
          TauRegime::fixed(15), TauRegime::fixed(20), TauRegime::uniform_between(2, 20)};
}

BenchmarkConfig base_config() {
  BenchmarkConfig c;
  c.simulation.seed = kSeed;
  return c;
}

void criteria_one_two() {
  BenchmarkConfig c = base_config();
  c.num_samples = kGridSamples;
  c.tau_regimes = reference_taus();
  c.estimators = {EstimatorSpec::parse("mle"), EstimatorSpec::parse("oracle")};
  const auto start = std::chrono::steady_clock::now();
  const BenchmarkReport r = run_benchmark(c);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double d = static_cast<double>(c.simulation.d);

  Line one;
  double worst = 0.0;
  for (const auto& cell : r.cells) {
    const EstimatorResult* mle = cell.find("mle");
    const double expected = d * cell.mean_noise_variance / static_cast<double>(cell.beats);
    const double err = mle != nullptr && mle->ok ? rel_diff(mle->mse, expected) : INFINITY;
    worst = std::max(worst, err);
    one.require(err < kMleRelTol, cell.regime.label() + " B=" + std::to_string(cell.beats));
  }
  const double m1 = result(r, TauRegime::fixed(2), 1, "mle").mse;
  const double m20 = result(r, TauRegime::fixed(2), 20, "mle").mse;
  one.detail << " max rel err vs d/(tau^2 B) " << worst << "; tau=2 B=1 " << m1 << " (reference " << kRefMleTau2B1
             << "), B=20 " << m20 << " (reference " << kRefMleTau2B20 << "); grid with oracle " << seconds << " s";
  one.require(rel_diff(m1, kRefMleTau2B1) < kMleRelTol, "reference tau=2 B=1");
  one.require(rel_diff(m20, kRefMleTau2B20) < kMleRelTol, "reference tau=2 B=20");
  one.require(seconds < kMaxRuntimeSeconds, "runtime");
  report(1, "MLE matches d/(tau^2 B)", one);

  Line two;
  double min_acc = 1.0, max_mse = 0.0;
  for (double tau : {2.0, 5.0, 10.0, 15.0, 20.0}) {
    const EstimatorResult& o = result(r, TauRegime::fixed(tau), 20, "oracle:truth");
    const double acc = o.diagnostics.at("correct_atom_fraction").get<double>();
    min_acc = std::min(min_acc, acc);
    max_mse = std::max(max_mse, o.mse);
    two.require(acc > kOracleMinAccuracy && o.mse < kOracleMaxMse, "tau=" + std::to_string(tau));
  }
  const double single = result(r, TauRegime::fixed(2), 1, "oracle:truth").mse;
  two.detail << " B=20 min accuracy " << min_acc << ", max MSE " << max_mse << "; tau=2 B=1 MSE " << single
             << " (reference 0.16)";
  two.require(single >= kOracleSingleLo && single <= kOracleSingleHi, "single-beat range");
  report(2, "oracle Bayes", two);
}

void criteria_three_four() {
  BenchmarkConfig c = base_config();
  c.num_samples = kGridSamples;
  c.tau_regimes = {TauRegime::fixed(2), TauRegime::fixed(20)};
  c.estimators = {EstimatorSpec::parse("mle"), EstimatorSpec::parse("fa:truth")};
  const BenchmarkReport r = run_benchmark(c);

  const auto two = TauRegime::fixed(2);
  const double mle20 = result(r, two, 20, "mle").mse;
  const double fa20 = result(r, two, 20, "fa:truth").mse;
  const double mle1 = result(r, two, 1, "mle").mse;
  const double fa1 = result(r, two, 1, "fa:truth").mse;
  Line three;
  three.detail << " tau=2 B=20 FA " << fa20 << " vs MLE " << mle20 << " (reference 1.35 vs 6.21); B=1 FA " << fa1
               << " vs MLE " << mle1 << " (reference 2.38 vs 123.21)";
  three.require(fa20 < kFaOverMleMultiBeat * mle20, "B=20 factor 2");
  three.require(fa1 < kFaOverMleSingleBeat * mle1, "B=1 5%");
  three.require(rel_diff(fa20, kRefFaTau2B20) <= kRefRelTol, "B=20 within 30% of reference");
  three.require(rel_diff(fa1, kRefFaTau2B1) <= kRefRelTol, "B=1 within 30% of reference");
  report(3, "FA beats MLE at high noise", three);

  const auto twenty = TauRegime::fixed(20);
  const double mle_lo = result(r, twenty, 20, "mle").mse;
  const double fa_lo = result(r, twenty, 20, "fa:truth").mse;
  Line four;
  four.detail << " tau=20 B=20 MLE " << mle_lo << " vs FA " << fa_lo << " (reference 0.06 vs 0.24)";
  four.require(mle_lo < fa_lo, "MLE < FA");
  report(4, "MLE beats FA at low noise", four);
}

void criterion_five() {
  BenchmarkConfig c = base_config();
  c.num_samples = kNoiseSamples;
  c.beats = {20};
  c.tau_regimes = {TauRegime::uniform_between(2, 20)};
  c.estimators = {EstimatorSpec::parse("fa:truth"), EstimatorSpec::parse("fa:estimated")};
  const BenchmarkReport r = run_benchmark(c);
  const CellResult& cell = r.cells.at(0);
  const auto& ne = cell.noise_estimation;
  Line five;
  if (!ne.contains("trace")) {
    five.require(false, "noise estimation failed");
    report(5, "noise estimation fidelity", five);
    return;
  }
  const double d = static_cast<double>(c.simulation.d);
  const double trace = ne.at("trace").get<double>();
  const double k_err = ne.at("k_relative_frobenius_error").get<double>();
  const double tau_err = ne.at("tau_median_relative_error").get<double>();
  const double truth = cell.find("fa:truth")->mse;
  const double est = cell.find("fa:estimated")->mse;
  five.detail << " tr(K)-d " << trace - d << "; K rel err " << k_err << "; median tau rel err " << tau_err
              << "; FA truth " << truth << " vs estimated " << est << " (rel " << rel_diff(est, truth)
              << "; reference 0.353 vs 0.362)";
  five.require(std::abs(trace - d) <= kTraceTol * d, "trace");
  five.require(k_err < kKRelTol, "K error");
  five.require(tau_err < kTauRelTol, "tau error");
  five.require(rel_diff(est, truth) < kFaKnowledgeRelTol, "FA truth vs estimated");
  report(5, "noise estimation fidelity", five);
}

bool monotone(const std::vector<double>& ll) {
  for (std::size_t t = 1; t < ll.size(); ++t) {
    if (ll[t] < ll[t - 1] - kMonotoneSlack * std::abs(ll[t - 1])) return false;
  }
  return true;
}

double radius(const OdeState& s) { return std::hypot(s.u, s.v); }

double rk4_order() {
  const OdeParams p = OdeParams::mcsharry_defaults();
  const double fs = 100.0;
  const OdeState init{0.8, 0.3, 0.0};
  const RawTrace ref = integrate_mcsharry(p, 2.0, fs, init, 256);
  std::vector<double> lh, le;
  for (int steps : {2, 4, 8, 16}) {
    const RawTrace tr = integrate_mcsharry(p, 2.0, fs, init, steps);
    lh.push_back(std::log(1.0 / (steps * fs)));
    le.push_back(std::log((tr.samples - ref.samples).cwiseAbs().maxCoeff()));
  }
  const double mx = (lh[0] + lh[1] + lh[2] + lh[3]) / 4.0, my = (le[0] + le[1] + le[2] + le[3]) / 4.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    sxy += (lh[i] - mx) * (le[i] - my);
    sxx += (lh[i] - mx) * (lh[i] - mx);
  }
  return sxy / sxx;
}

void criterion_six() {
  Line six;
  // Simulated FA-style data at the default settings.
  SimulationSettings s;
  s.seed = kSeed;
  const CovarianceMatrix k = s.true_covariance();
  const Dataset ds = simulate_dataset(s, 300, 20, TauRegime::uniform_between(2, 20));
  std::vector<NoisePrecision> taus;
  for (const auto& x : ds.samples) taus.push_back(*x.true_precision);
  const FaData data = FaData::from_samples(ds.samples, k, taus);

  const FaModel fa = fit_factor_analysis(data, 5);
  six.require(monotone(fa.log_likelihood), "FA monotone log-likelihood");
  MogFaOptions mopts;
  mopts.gmm.components = 3;
  mopts.seed = 1;
  const MogFaModel mog = fit_mog_fa(data, 5, mopts);
  six.require(monotone(mog.fa.log_likelihood), "MoG-FA monotone log-likelihood");

  Rng rng(5);
  std::normal_distribution<double> n01;
  double round_trip = 0.0;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x(k.dim()), mu(k.dim());
    for (auto& v : x) v = n01(rng);
    for (auto& v : mu) v = n01(rng);
    round_trip = std::max(round_trip, (unwhiten(k, whiten(k, x, mu)) + mu - x).cwiseAbs().maxCoeff());
  }
  six.require(round_trip < kRoundTripTol, "whiten round trip");

  const MogFaModel single = refit_under_mixture(data, initial_fa_model(data, 5), LatentMixture::standard_normal(5));
  double sq = 0.0;
  bool contracts = true;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Eigen::VectorXd a = fa_posterior_mean(fa, ds.samples[i], k, taus[i]);
    sq += (a - mog_fa_posterior_mean(single, ds.samples[i], k, taus[i])).squaredNorm();
    const double post = whiten(k, a, fa.mean).norm();
    const double raw = whiten(k, ds.samples[i].beat_mean(), fa.mean).norm();
    contracts = contracts && post <= raw * (1.0 + 1e-12);
    worst_ratio = std::max(worst_ratio, post / raw);
  }
  const double c1_rms = std::sqrt(sq / static_cast<double>(ds.samples.size() * static_cast<std::size_t>(k.dim())));
  six.require(c1_rms < kSingleComponentRms, "C=1 matches FA");
  six.require(contracts, "FA shrinkage");

  double affine = 0.0;
  for (int t = 0; t + 1 < 10; ++t) {
    const Eigen::VectorXd x1 = ds.samples[static_cast<std::size_t>(t)].beat_mean();
    const Eigen::VectorXd x2 = ds.samples[static_cast<std::size_t>(t + 1)].beat_mean();
    const double a = 0.3 + 0.05 * t;
    const Eigen::VectorXd lhs = fa_posterior_mean(fa, a * x1 + (1.0 - a) * x2, 20, k, taus[0]);
    const Eigen::VectorXd rhs =
        a * fa_posterior_mean(fa, x1, 20, k, taus[0]) + (1.0 - a) * fa_posterior_mean(fa, x2, 20, k, taus[0]);
    affine = std::max(affine, (lhs - rhs).norm() / rhs.norm());
  }
  six.require(affine < kAffineTol, "FA affinity");

  const double order = rk4_order();
  six.require(order >= kMinRk4Order, "RK4 order");

  const OdeParams p = OdeParams::mcsharry_defaults();
  double worst_radius = 0.0;
  for (double r0 : {0.11, 0.5, 1.5, 1.99}) {
    const auto states = simulate_states(p, 10.0, 500.0, OdeState{r0, 0.0, 0.0});
    worst_radius = std::max(worst_radius, std::abs(radius(states.back()) - 1.0));
  }
  six.require(worst_radius < kRadiusTol, "limit cycle radius");

  BenchmarkConfig bc = base_config();
  bc.num_samples = 60;
  bc.simulation.d = 151;
  bc.simulation.r_offset = 50;
  bc.tau_regimes = {TauRegime::fixed(2), TauRegime::uniform_between(2, 20)};
  bc.beats = {1, 5};
  bc.components = 2;
  bc.latent_dim.fixed = 3;
  auto strip = [](const BenchmarkReport& r) {
    nlohmann::json j = to_json(r);
    j.erase("wall_clock_seconds");
    return j.dump();
  };
  const std::string first = strip(run_benchmark(bc));
  const bool same = strip(run_benchmark(bc)) == first;
  bc.workers = 2;
  const bool same_workers = strip(run_benchmark(bc)) == first;
  six.require(same && same_workers, "bit-identical reports");

  six.detail << " FA/MoG-FA monotone " << monotone(fa.log_likelihood) << "/" << monotone(mog.fa.log_likelihood)
             << "; round trip " << round_trip << "; C=1 RMS " << c1_rms << "; worst whitened norm ratio " << worst_ratio << "; affine " << affine << "; RK4 order "
             << order << "; radius err at 10 s " << worst_radius << "; deterministic " << (same && same_workers);
  report(6, "property suites", six);
}

}  // namespace

// Optional arguments select criteria by number; none runs all.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](std::initializer_list<int> ids) {
    if (only.empty()) return true;
    for (int id : ids)
      if (only.count(id) != 0) return true;
    return false;
  };
  try {
    if (wanted({1, 2})) criteria_one_two();
    if (wanted({3, 4})) criteria_three_four();
    if (wanted({5})) criterion_five();
    if (wanted({6})) criterion_six();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 100;
  }
  std::printf("%d criteria failed\n", failures);
  return failures;
}
