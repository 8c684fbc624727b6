#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgfa/bench.hpp"
#include "ecgfa/noise_model.hpp"

namespace ecgfa {

// Long-format rows: series,x,y.
struct PlotRow {
  std::string series;
  std::string x;
  double y = 0.0;
};

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<long> counts;    // bins
};

// Equal-width bins over [min, max]; the last bin is closed.
Histogram histogram(std::span<const double> values, int bins);

// One series per observed beat ("beat_0", ...), one "reconstruction" series
// and, when known, a "truth" series. x is time in seconds.
std::vector<PlotRow> beat_overlay_rows(const EcgSample& sample, const Eigen::VectorXd& reconstruction, double fs);
// "count" rows keyed by the left bin edge and "edge" rows listing every edge.
std::vector<PlotRow> histogram_rows(const Histogram& h);
std::vector<PlotRow> tau_histogram_rows(std::span<const NoisePrecision> taus, int bins);
std::vector<PlotRow> beat_count_histogram_rows(std::span<const EcgSample> samples);
// One series per estimator, x = "<regime>,B=<b>", y = MSE; failed cells omitted.
std::vector<PlotRow> mse_table_rows(const BenchmarkReport& report);

std::string plot_csv(const std::vector<PlotRow>& rows);
// Empty input is an error rather than an empty file.
void write_plot_csv(const std::filesystem::path& path, const std::vector<PlotRow>& rows);

}  // namespace ecgfa
