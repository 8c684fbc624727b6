#include "ecgfa/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "ecgfa/error.hpp"

namespace ecgfa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view text, const fs::path& path, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(ErrorCode::kParseError,
         path.string() + ":" + std::to_string(line) + ": not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string sanitize_id(const std::string& id) {
  require(!id.empty(), "dataset: sample id must not be empty");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
                    c == '.';
    require(ok && id != "." && id != "..", "dataset: sample id '" + id + "' contains unsupported characters");
  }
  return id;
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIoError, "cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) fail(ErrorCode::kIoError, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIoError, "cannot move output into place at '" + path.string() + "'");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& values, const std::vector<std::string>& row_ids) {
  require(row_ids.empty() || static_cast<Eigen::Index>(row_ids.size()) == values.rows(),
          "write_matrix_csv: one row id per row required");
  std::string out = "row_id";
  for (Eigen::Index c = 0; c < values.cols(); ++c) out += ",c" + std::to_string(c);
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out += row_ids.empty() ? std::to_string(r) : row_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out += ',';
      append_double(out, values(r, c));
    }
    out += '\n';
  }
  write_text_atomic(path, out);
}

LabeledMatrix read_matrix_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kParseError, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty() || header.front() != "row_id") {
    fail(ErrorCode::kParseError, path.string() + ": header must start with row_id");
  }
  const std::size_t cols = header.size() - 1;
  LabeledMatrix out;
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != cols + 1) {
      fail(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                       std::to_string(cols + 1) + " fields, got " + std::to_string(fields.size()));
    }
    out.row_ids.emplace_back(fields.front());
    for (std::size_t c = 1; c < fields.size(); ++c) flat.push_back(parse_double(fields[c], path, line_no));
  }
  const auto rows = static_cast<Eigen::Index>(out.row_ids.size());
  out.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, static_cast<Eigen::Index>(cols));
  return out;
}

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kParseError, "expected a numeric array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kParseError, "expected an array of rows");
  if (j.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j[r]);
    if (row.size() != cols) fail(ErrorCode::kParseError, "ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

CovarianceMatrix SimulationSettings::true_covariance() const {
  return matern_covariance(d, fs, lengthscale_s, smoothness);
}

void SimulationSettings::validate() const {
  require(fs > 0.0, "simulation: fs must be positive");
  require(d >= 2, "simulation: d must be >= 2");
  require(r_offset >= 0 && r_offset < d, "simulation: r_offset must lie in [0, d)");
  require(jitter >= 0.0 && jitter < 1.0, "simulation: jitter must lie in [0, 1)");
  require(amplitude_gain > 0.0, "simulation: amplitude_gain must be positive");
  require(lengthscale_s > 0.0, "simulation: lengthscale must be positive");
  parse_smoothness(smoothness);
}

json to_json(const SimulationSettings& s) {
  return json{{"fs", s.fs},
              {"d", s.d},
              {"r_offset", s.r_offset},
              {"jitter", s.jitter},
              {"amplitude_gain", s.amplitude_gain},
              {"lengthscale_s", s.lengthscale_s},
              {"smoothness", s.smoothness},
              {"seed", s.seed}};
}

SimulationSettings simulation_settings_from_json(const json& j) {
  SimulationSettings s;
  s.fs = j.value("fs", s.fs);
  s.d = j.value("d", s.d);
  s.r_offset = j.value("r_offset", s.r_offset);
  s.jitter = j.value("jitter", s.jitter);
  s.amplitude_gain = j.value("amplitude_gain", s.amplitude_gain);
  s.lengthscale_s = j.value("lengthscale_s", s.lengthscale_s);
  s.smoothness = j.value("smoothness", s.smoothness);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

bool Dataset::has_truth() const {
  return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.truth.has_value(); });
}

bool Dataset::has_true_precision() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.true_precision.has_value(); });
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  require(!dataset.samples.empty(), "dataset: no samples");
  std::error_code ec;
  fs::create_directories(dir / "samples", ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create dataset directory '" + dir.string() + "'");

  json entries = json::array();
  const bool truth = dataset.has_truth();
  Eigen::MatrixXd truth_rows;
  std::vector<std::string> ids;
  if (truth) truth_rows.resize(static_cast<Eigen::Index>(dataset.samples.size()), dataset.samples.front().dim());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    s.validate();
    const std::string id = sanitize_id(s.id);
    const std::string file = "samples/" + id + ".csv";
    write_matrix_csv(dir / file, s.beats);
    json entry{{"id", id}, {"beats_file", file}, {"num_beats", s.num_beats()}};
    if (s.true_precision) entry["tau"] = s.true_precision->tau();
    if (s.truth) {
      entry["r_peak_index"] = s.truth->r_peak_index;
      truth_rows.row(static_cast<Eigen::Index>(i)) = s.truth->values.transpose();
    }
    entries.push_back(std::move(entry));
    ids.push_back(id);
  }
  if (truth) write_matrix_csv(dir / "truth.csv", truth_rows, ids);

  json manifest{{"schema_version", kSchemaVersion},
                {"d", dataset.samples.front().dim()},
                {"fs", dataset.settings.fs},
                {"seed", dataset.settings.seed},
                {"has_truth", truth},
                {"generator", to_json(dataset.settings)},
                {"samples", std::move(entries)}};
  if (truth) manifest["truth_file"] = "truth.csv";
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  try {
    const int version = manifest.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
      fail(ErrorCode::kParseError, "dataset: unsupported schema_version " + std::to_string(version));
    }
    Dataset out;
    out.settings = manifest.contains("generator") ? simulation_settings_from_json(manifest.at("generator"))
                                                  : SimulationSettings{};
    out.settings.fs = manifest.value("fs", out.settings.fs);
    out.settings.d = manifest.at("d").get<Eigen::Index>();
    out.settings.seed = manifest.value("seed", out.settings.seed);

    LabeledMatrix truth;
    const bool has_truth = manifest.value("has_truth", false);
    if (has_truth) truth = read_matrix_csv(dir / manifest.value("truth_file", std::string("truth.csv")));

    std::size_t i = 0;
    for (const auto& entry : manifest.at("samples")) {
      EcgSample s;
      s.id = entry.at("id").get<std::string>();
      s.beats = read_matrix_csv(dir / entry.at("beats_file").get<std::string>()).values;
      if (s.dim() != out.settings.d) fail(ErrorCode::kParseError, "dataset: sample '" + s.id + "' has wrong length");
      if (entry.contains("tau")) s.true_precision = NoisePrecision(entry.at("tau").get<double>());
      if (has_truth) {
        if (i >= truth.row_ids.size() || truth.row_ids[i] != s.id) {
          fail(ErrorCode::kParseError, "dataset: truth.csv rows do not match the sample list");
        }
        ThetaBeat beat;
        beat.values = truth.values.row(static_cast<Eigen::Index>(i)).transpose();
        beat.fs = out.settings.fs;
        beat.r_peak_index = entry.value("r_peak_index", Eigen::Index{0});
        s.truth = std::move(beat);
      }
      s.validate();
      out.samples.push_back(std::move(s));
      ++i;
    }
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, "dataset manifest: " + std::string(e.what()));
  }
}

json to_json(const FaModel& model) {
  return json{{"schema_version", kSchemaVersion},
              {"kind", "fa"},
              {"dim", model.dim()},
              {"latent_dim", model.latent_dim()},
              {"mean", to_json(model.mean)},
              {"loadings", to_json(model.loadings)},
              {"noise_diag", to_json(model.noise_diag)},
              {"fit", {{"iterations", model.iterations},
                       {"converged", model.converged},
                       {"log_likelihood", model.log_likelihood}}}};
}

FaModel fa_model_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) fail(ErrorCode::kParseError, "model: unsupported schema_version");
    FaModel m;
    m.mean = vector_from_json(j.at("mean"));
    m.loadings = matrix_from_json(j.at("loadings"));
    m.noise_diag = vector_from_json(j.at("noise_diag"));
    if (j.contains("fit")) {
      const auto& fit = j.at("fit");
      m.iterations = fit.value("iterations", 0);
      m.converged = fit.value("converged", false);
      m.log_likelihood = fit.value("log_likelihood", std::vector<double>{});
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, "model: " + std::string(e.what()));
  }
}

json to_json(const LatentMixture& mixture) {
  json comps = json::array();
  for (std::size_t c = 0; c < mixture.weights.size(); ++c) {
    comps.push_back({{"weight", mixture.weights[c]},
                     {"mean", to_json(mixture.means[c])},
                     {"covariance", to_json(mixture.covariances[c])}});
  }
  return comps;
}

LatentMixture latent_mixture_from_json(const json& j) {
  LatentMixture mix;
  for (const auto& c : j) {
    mix.weights.push_back(c.at("weight").get<double>());
    mix.means.push_back(vector_from_json(c.at("mean")));
    mix.covariances.push_back(matrix_from_json(c.at("covariance")));
  }
  mix.validate();
  return mix;
}

json to_json(const MogFaModel& model) {
  json j = to_json(model.fa);
  j["kind"] = "mog-fa";
  j["components"] = to_json(model.mixture);
  j["mixture_log_likelihood"] = model.mixture_log_likelihood;
  return j;
}

MogFaModel mog_fa_model_from_json(const json& j) {
  try {
    MogFaModel m;
    m.fa = fa_model_from_json(j);
    m.mixture = latent_mixture_from_json(j.at("components"));
    m.mixture_log_likelihood = j.value("mixture_log_likelihood", 0.0);
    m.validate();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, "model: " + std::string(e.what()));
  }
}

}  // namespace ecgfa
