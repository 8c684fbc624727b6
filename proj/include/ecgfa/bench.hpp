#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgfa/factor_analysis.hpp"
#include "ecgfa/io.hpp"
#include "ecgfa/mog_fa.hpp"
#include "ecgfa/simulate.hpp"

namespace ecgfa {

enum class EstimatorKind { kMle, kOracle, kFa, kMogFa };
enum class NoiseKnowledge { kTruth, kEstimated };

// "mle", "oracle", "fa", "mog-fa", optionally suffixed ":truth" or ":estimated"
// (default truth).
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::kMle;
  NoiseKnowledge knowledge = NoiseKnowledge::kTruth;

  static EstimatorSpec parse(const std::string& text);
  [[nodiscard]] std::string name() const;
  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

struct LatentDimSpec {
  bool scree = false;
  Eigen::Index fixed = 5;
  double slope_cutoff = -0.8;
};

struct BenchmarkConfig {
  Eigen::Index num_samples = 1000;
  std::vector<Eigen::Index> beats{1, 20};
  std::vector<TauRegime> tau_regimes{TauRegime::fixed(2),  TauRegime::fixed(5),  TauRegime::fixed(10),
                                     TauRegime::fixed(15), TauRegime::fixed(20), TauRegime::uniform_between(2, 20)};
  SimulationSettings simulation;  // d, fs, r offset, jitter, gain, Matern, seed
  std::vector<EstimatorSpec> estimators{
      EstimatorSpec::parse("mle"),        EstimatorSpec::parse("oracle"),
      EstimatorSpec::parse("fa:truth"),   EstimatorSpec::parse("fa:estimated"),
      EstimatorSpec::parse("mog-fa:truth"), EstimatorSpec::parse("mog-fa:estimated")};
  LatentDimSpec latent_dim;
  int components = 5;
  MixtureWeighting mixture_weighting = MixtureWeighting::kResponsibility;
  ResidualTreatment residual = ResidualTreatment::kNoise;
  FaFitOptions fa;
  int workers = 1;

  void validate() const;
};

nlohmann::json to_json(const BenchmarkConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j, BenchmarkConfig base = {});

struct EstimatorResult {
  std::string estimator;
  bool ok = false;
  double mse = 0.0;                 // mean summed squared error per beat
  double se = 0.0;                  // standard error of mse
  double mse_per_coordinate = 0.0;  // mse / d
  nlohmann::json diagnostics = nlohmann::json::object();
  std::string error_code;
  std::string error_message;
};

struct CellResult {
  TauRegime regime;
  Eigen::Index beats = 0;
  Eigen::Index num_samples = 0;
  double mean_noise_variance = 0.0;  // mean of the true 1 / tau_i^2
  nlohmann::json noise_estimation = nlohmann::json::object();
  std::vector<EstimatorResult> results;

  [[nodiscard]] const EstimatorResult* find(const std::string& estimator) const;
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<CellResult> cells;
  double wall_clock_seconds = 0.0;
  std::string library_version;

  [[nodiscard]] const CellResult* find(const TauRegime& regime, Eigen::Index beats) const;
};

// Runs every (tau regime, B) cell. Ground-truth beats are shared across cells;
// noise is drawn per cell. Estimator failures mark the result as failed and
// the run continues.
BenchmarkReport run_benchmark(const BenchmarkConfig& config);

nlohmann::json to_json(const BenchmarkReport& report);
BenchmarkReport benchmark_report_from_json(const nlohmann::json& j);
void write_report(const std::filesystem::path& path, const BenchmarkReport& report);

}  // namespace ecgfa
