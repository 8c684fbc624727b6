#include "ecgfa/plot_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "ecgfa/error.hpp"
#include "ecgfa/io.hpp"

namespace ecgfa {

namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Histogram histogram(std::span<const double> values, int bins) {
  require(!values.empty(), "histogram: no values");
  require(bins >= 1, "histogram: bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + b * width);
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / width));
    b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::vector<PlotRow> beat_overlay_rows(const EcgSample& sample, const Eigen::VectorXd& reconstruction, double fs) {
  sample.validate();
  require(fs > 0.0, "plot-data: fs must be positive");
  require(reconstruction.size() == sample.dim(), "plot-data: reconstruction length differs from beats");
  std::vector<PlotRow> rows;
  auto add = [&](const std::string& series, const auto& values) {
    for (Eigen::Index t = 0; t < values.size(); ++t) rows.push_back({series, number(t / fs), values[t]});
  };
  for (Eigen::Index b = 0; b < sample.num_beats(); ++b) {
    add("beat_" + std::to_string(b), Eigen::VectorXd(sample.beats.row(b).transpose()));
  }
  add("reconstruction", reconstruction);
  if (sample.truth) add("truth", sample.truth->values);
  return rows;
}

std::vector<PlotRow> histogram_rows(const Histogram& h) {
  std::vector<PlotRow> rows;
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    rows.push_back({"count", number(h.edges[b]), static_cast<double>(h.counts[b])});
  }
  for (std::size_t e = 0; e < h.edges.size(); ++e) rows.push_back({"edge", std::to_string(e), h.edges[e]});
  return rows;
}

std::vector<PlotRow> tau_histogram_rows(std::span<const NoisePrecision> taus, int bins) {
  std::vector<double> values;
  for (const auto& t : taus) values.push_back(t.tau());
  return histogram_rows(histogram(values, bins));
}

std::vector<PlotRow> beat_count_histogram_rows(std::span<const EcgSample> samples) {
  require(!samples.empty(), "plot-data: no samples");
  std::map<Eigen::Index, long> counts;
  for (const auto& s : samples) ++counts[s.num_beats()];
  std::vector<PlotRow> rows;
  for (const auto& [beats, count] : counts) rows.push_back({"count", std::to_string(beats), static_cast<double>(count)});
  return rows;
}

std::vector<PlotRow> mse_table_rows(const BenchmarkReport& report) {
  require(!report.cells.empty(), "plot-data: report has no cells");
  std::vector<PlotRow> rows;
  for (const auto& cell : report.cells) {
    const std::string x = cell.regime.label() + ",B=" + std::to_string(cell.beats);
    for (const auto& r : cell.results) {
      if (r.ok) rows.push_back({r.estimator, x, r.mse});
    }
  }
  require(!rows.empty(), "plot-data: report has no successful results");
  return rows;
}

std::string plot_csv(const std::vector<PlotRow>& rows) {
  std::string out = "series,x,y\n";
  for (const auto& r : rows) out += csv_field(r.series) + "," + csv_field(r.x) + "," + number(r.y) + "\n";
  return out;
}

void write_plot_csv(const std::filesystem::path& path, const std::vector<PlotRow>& rows) {
  require(!rows.empty(), "plot-data: nothing to write");
  write_text_atomic(path, plot_csv(rows));
}

}  // namespace ecgfa
