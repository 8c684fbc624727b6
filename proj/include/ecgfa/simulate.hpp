#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/io.hpp"
#include "ecgfa/noise_model.hpp"

namespace ecgfa {

// Seed streams; combined with the run seed and indices via derive_seed.
enum class Stream : std::uint64_t { kTruth = 1, kTau = 2, kNoise = 3, kMixture = 4 };

// Noise precision regime: a fixed tau, or tau_i ~ Uniform(lo, hi).
struct TauRegime {
  double lo = 2.0;
  double hi = 2.0;
  bool uniform = false;

  static TauRegime fixed(double tau) { return {tau, tau, false}; }
  static TauRegime uniform_between(double lo, double hi) { return {lo, hi, true}; }

  [[nodiscard]] std::string label() const;  // "tau=2" or "tau~U(2,20)"
  void validate() const;
  [[nodiscard]] std::vector<NoisePrecision> draw(Eigen::Index n, std::uint64_t seed) const;

  friend bool operator==(const TauRegime&, const TauRegime&) = default;
};

// Jittered ground-truth beats, one per sample, from seed streams keyed on the
// sample index.
std::vector<ThetaBeat> simulate_ground_truth(const SimulationSettings& settings, Eigen::Index n, int workers = 1);

// Observed beats x_ib = theta_i + eps_ib with eps_ib ~ N(0, K / tau_i^2).
// Sample i draws its noise from derive_seed(seed, {kNoise, stream_key, i}).
std::vector<EcgSample> corrupt_beats(const std::vector<ThetaBeat>& truth, const CovarianceMatrix& k,
                                     const std::vector<NoisePrecision>& taus, Eigen::Index beats,
                                     std::uint64_t seed, std::uint64_t stream_key, int workers = 1);

// A complete simulated dataset (truth, per-sample tau, noisy beats).
Dataset simulate_dataset(const SimulationSettings& settings, Eigen::Index n, Eigen::Index beats,
                         const TauRegime& regime, int workers = 1);

Eigen::MatrixXd stack_truth(const std::vector<ThetaBeat>& truth);

}  // namespace ecgfa
