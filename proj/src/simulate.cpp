#include "ecgfa/simulate.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ecgfa/ecg_sim.hpp"
#include "ecgfa/error.hpp"
#include "ecgfa/parallel.hpp"
#include "ecgfa/rng.hpp"

namespace ecgfa {

namespace {

std::uint64_t stream(Stream s) { return static_cast<std::uint64_t>(s); }

std::string format_number(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

std::string TauRegime::label() const {
  if (uniform) return "tau~U(" + format_number(lo) + "," + format_number(hi) + ")";
  return "tau=" + format_number(lo);
}

void TauRegime::validate() const {
  require(lo > 0.0 && hi > 0.0 && std::isfinite(lo) && std::isfinite(hi), "tau regime: bounds must be positive");
  require(lo <= hi, "tau regime: lo must not exceed hi");
  require(uniform || lo == hi, "tau regime: a fixed regime has lo == hi");
}

std::vector<NoisePrecision> TauRegime::draw(Eigen::Index n, std::uint64_t seed) const {
  validate();
  std::vector<NoisePrecision> out;
  out.reserve(static_cast<std::size_t>(n));
  if (!uniform) {
    out.assign(static_cast<std::size_t>(n), NoisePrecision(lo));
    return out;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < n; ++i) out.emplace_back(dist(rng));
  return out;
}

std::vector<ThetaBeat> simulate_ground_truth(const SimulationSettings& settings, Eigen::Index n, int workers) {
  settings.validate();
  require(n >= 1, "simulate: N must be >= 1");
  const OdeParams base = OdeParams::mcsharry_defaults().with_amplitude_gain(settings.amplitude_gain);
  std::vector<ThetaBeat> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    const OdeParams params =
        sample_jittered_params(base, settings.jitter, derive_seed(settings.seed, {stream(Stream::kTruth), i}));
    out[i] = extract_canonical_beat(params, settings.fs, settings.d, settings.r_offset);
  });
  return out;
}

std::vector<EcgSample> corrupt_beats(const std::vector<ThetaBeat>& truth, const CovarianceMatrix& k,
                                     const std::vector<NoisePrecision>& taus, Eigen::Index beats,
                                     std::uint64_t seed, std::uint64_t stream_key, int workers) {
  require(beats >= 1, "simulate: B must be >= 1");
  require(taus.size() == truth.size(), "simulate: one tau per sample required");
  std::vector<EcgSample> out(truth.size());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    require(truth[i].length() == k.dim(), "simulate: beat length differs from covariance dimension");
    EcgSample s;
    s.id = "s" + std::to_string(i);
    s.beats = sample_noise_beats(k, taus[i], beats, derive_seed(seed, {stream(Stream::kNoise), stream_key, i}));
    s.beats.rowwise() += truth[i].values.transpose();
    s.truth = truth[i];
    s.true_precision = taus[i];
    out[i] = std::move(s);
  });
  return out;
}

Dataset simulate_dataset(const SimulationSettings& settings, Eigen::Index n, Eigen::Index beats,
                         const TauRegime& regime, int workers) {
  const auto truth = simulate_ground_truth(settings, n, workers);
  const auto taus = regime.draw(n, derive_seed(settings.seed, {stream(Stream::kTau), 0}));
  Dataset out;
  out.settings = settings;
  out.samples = corrupt_beats(truth, settings.true_covariance(), taus, beats, settings.seed, 0, workers);
  return out;
}

Eigen::MatrixXd stack_truth(const std::vector<ThetaBeat>& truth) {
  require(!truth.empty(), "stack_truth: no beats");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(truth.size()), truth.front().length());
  for (std::size_t i = 0; i < truth.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = truth[i].values.transpose();
  return out;
}

}  // namespace ecgfa
