#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ecgfa/factor_analysis.hpp"
#include "ecgfa/mog_fa.hpp"
#include "ecgfa/noise_model.hpp"

namespace ecgfa {

inline constexpr int kSchemaVersion = 1;

// Headered CSV: "row_id,c0,c1,..." then one row per matrix row.
struct LabeledMatrix {
  std::vector<std::string> row_ids;
  Eigen::MatrixXd values;
};

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                      const std::vector<std::string>& row_ids = {});
LabeledMatrix read_matrix_csv(const std::filesystem::path& path);

// Writes to a sibling temporary and renames, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// Generator settings recorded with a dataset so the true noise model can be rebuilt.
struct SimulationSettings {
  double fs = 500.0;
  Eigen::Index d = 493;
  Eigen::Index r_offset = 164;
  double jitter = 0.1;
  double amplitude_gain = 30.0;
  double lengthscale_s = 0.15;
  double smoothness = 2.5;
  std::uint64_t seed = 0;

  [[nodiscard]] CovarianceMatrix true_covariance() const;
  void validate() const;
};

nlohmann::json to_json(const SimulationSettings& s);
SimulationSettings simulation_settings_from_json(const nlohmann::json& j);

// A directory holding manifest.json, samples/<id>.csv (B x d beats) and,
// when known, truth.csv (one ground-truth beat per sample id).
struct Dataset {
  SimulationSettings settings;
  std::vector<EcgSample> samples;

  [[nodiscard]] bool has_truth() const;
  [[nodiscard]] bool has_true_precision() const;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const FaModel& model);
FaModel fa_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LatentMixture& mixture);
LatentMixture latent_mixture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MogFaModel& model);
MogFaModel mog_fa_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
// Row-major nested arrays.
nlohmann::json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

}  // namespace ecgfa
