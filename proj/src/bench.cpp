#include "ecgfa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "ecgfa/error.hpp"
#include "ecgfa/estimators.hpp"
#include "ecgfa/parallel.hpp"
#include "ecgfa/rng.hpp"

#ifndef ECGFA_VERSION
#define ECGFA_VERSION "0.0.0"
#endif

namespace ecgfa {

using nlohmann::json;

EstimatorSpec EstimatorSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string mode = colon == std::string::npos ? "truth" : text.substr(colon + 1);
  EstimatorSpec out;
  if (kind == "mle") {
    out.kind = EstimatorKind::kMle;
  } else if (kind == "oracle") {
    out.kind = EstimatorKind::kOracle;
  } else if (kind == "fa") {
    out.kind = EstimatorKind::kFa;
  } else if (kind == "mog-fa") {
    out.kind = EstimatorKind::kMogFa;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown estimator '" + kind + "' (expected mle, oracle, fa, mog-fa)");
  }
  if (mode == "truth") {
    out.knowledge = NoiseKnowledge::kTruth;
  } else if (mode == "estimated") {
    out.knowledge = NoiseKnowledge::kEstimated;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown noise knowledge '" + mode + "' (expected truth or estimated)");
  }
  return out;
}

std::string EstimatorSpec::name() const {
  std::string out;
  switch (kind) {
    case EstimatorKind::kMle: return "mle";  // uses no noise model
    case EstimatorKind::kOracle: out = "oracle"; break;
    case EstimatorKind::kFa: out = "fa"; break;
    case EstimatorKind::kMogFa: out = "mog-fa"; break;
  }
  return out + (knowledge == NoiseKnowledge::kTruth ? ":truth" : ":estimated");
}

void BenchmarkConfig::validate() const {
  require(num_samples >= 1, "config: num_samples must be >= 1");
  require(!beats.empty(), "config: beats list is empty");
  for (auto b : beats) require(b >= 1, "config: every B must be >= 1");
  require(!tau_regimes.empty(), "config: tau_regimes is empty");
  for (const auto& r : tau_regimes) r.validate();
  simulation.validate();
  require(!estimators.empty(), "config: estimators list is empty");
  require(latent_dim.fixed >= 1, "config: latent dimension must be >= 1");
  require(latent_dim.fixed <= simulation.d, "config: latent dimension exceeds d");
  require(components >= 1, "config: components must be >= 1");
  require(fa.max_iterations >= 1 && fa.relative_tolerance > 0.0, "config: invalid FA options");
  require(workers >= 1, "config: workers must be >= 1");
}

namespace {

json regime_to_json(const TauRegime& r) {
  if (r.uniform) return json{{"uniform", {r.lo, r.hi}}};
  return json(r.lo);
}

TauRegime regime_from_json(const json& j) {
  if (j.is_number()) return TauRegime::fixed(j.get<double>());
  if (j.is_object() && j.contains("uniform") && j.at("uniform").size() == 2) {
    return TauRegime::uniform_between(j.at("uniform")[0].get<double>(), j.at("uniform")[1].get<double>());
  }
  fail(ErrorCode::kParseError, "config: tau regime must be a number or {\"uniform\": [lo, hi]}");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) fail(ErrorCode::kParseError, where + ": unknown key '" + key + "'");
  }
}

struct SampleStats {
  double mean = 0.0;
  double se = 0.0;
};

SampleStats summarize(const std::vector<double>& v) {
  SampleStats s;
  const auto n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

double median_relative_error(const std::vector<NoisePrecision>& est, const std::vector<NoisePrecision>& truth) {
  std::vector<double> rel(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) rel[i] = std::abs(est[i].tau() - truth[i].tau()) / truth[i].tau();
  std::nth_element(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2), rel.end());
  const double upper = rel[rel.size() / 2];
  if (rel.size() % 2 == 1) return upper;
  const double lower = *std::max_element(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2));
  return 0.5 * (lower + upper);
}

struct NoiseView {
  CovarianceMatrix k;
  std::vector<NoisePrecision> taus;
};

// Fitted models shared by estimators in one cell and noise-knowledge mode.
struct ModelCache {
  std::optional<FaData> data;
  std::optional<FaModel> fa;
  std::optional<MogFaModel> mog;
  Eigen::Index p = 0;
  Eigen::Index scree_p = 0;
};

class CellRunner {
 public:
  CellRunner(const BenchmarkConfig& config, const std::vector<ThetaBeat>& truth, const AtomPrior& atoms,
             const CovarianceMatrix& k_true, std::size_t cell_index, const TauRegime& regime, Eigen::Index beats)
      : config_(config), truth_(truth), atoms_(atoms), cell_index_(cell_index) {
    cell_.regime = regime;
    cell_.beats = beats;
    cell_.num_samples = config.num_samples;
    const std::uint64_t seed = config.simulation.seed;
    truth_view_.k = k_true;
    truth_view_.taus = regime.draw(config.num_samples,
                                   derive_seed(seed, {static_cast<std::uint64_t>(Stream::kTau), cell_index}));
    samples_ = corrupt_beats(truth, k_true, truth_view_.taus, beats, seed, cell_index, config.workers);
    for (const auto& t : truth_view_.taus) cell_.mean_noise_variance += t.variance();
    cell_.mean_noise_variance /= static_cast<double>(truth_view_.taus.size());
  }

  CellResult run() {
    const bool needs_estimate = std::any_of(config_.estimators.begin(), config_.estimators.end(), [](const auto& e) {
      return e.kind != EstimatorKind::kMle && e.knowledge == NoiseKnowledge::kEstimated;
    });
    if (needs_estimate) estimate_noise_model();
    for (const auto& spec : config_.estimators) cell_.results.push_back(run_estimator(spec));
    return std::move(cell_);
  }

 private:
  void estimate_noise_model() {
    try {
      NoiseEstimate est = estimate_noise(samples_);
      const Eigen::MatrixXd& k = truth_view_.k.matrix();
      cell_.noise_estimation = {
          {"trace", est.covariance.trace()},
          {"k_relative_frobenius_error", (est.covariance.matrix() - k).norm() / k.norm()},
          {"tau_median_relative_error", median_relative_error(est.precisions, truth_view_.taus)},
      };
      estimated_view_ = NoiseView{std::move(est.covariance), std::move(est.precisions)};
    } catch (const Error& e) {
      noise_error_ = e;
      cell_.noise_estimation = {{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}};
    }
  }

  const NoiseView& view(NoiseKnowledge knowledge) {
    if (knowledge == NoiseKnowledge::kTruth) return truth_view_;
    if (noise_error_) throw *noise_error_;
    return *estimated_view_;
  }

  ModelCache& cache(NoiseKnowledge knowledge) { return caches_[knowledge == NoiseKnowledge::kTruth ? 0 : 1]; }

  FaModel& fa_model(NoiseKnowledge knowledge) {
    ModelCache& c = cache(knowledge);
    if (!c.fa) {
      const NoiseView& v = view(knowledge);
      c.data = FaData::from_samples(samples_, v.k, v.taus);
      const Eigen::VectorXd ev = c.data->covariance_eigenvalues();
      c.scree_p = select_latent_dim(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())),
                                    config_.latent_dim.slope_cutoff);
      c.p = config_.latent_dim.scree ? c.scree_p : config_.latent_dim.fixed;
      c.fa = fit_factor_analysis(*c.data, c.p, config_.fa);
    }
    return *c.fa;
  }

  MogFaModel& mog_model(NoiseKnowledge knowledge) {
    ModelCache& c = cache(knowledge);
    if (!c.mog) {
      FaModel stage1 = fa_model(knowledge);
      GmmOptions gopts;
      gopts.components = config_.components;
      const std::uint64_t seed =
          derive_seed(config_.simulation.seed, {static_cast<std::uint64_t>(Stream::kMixture), cell_index_,
                                                static_cast<std::uint64_t>(knowledge)});
      GmmFit g = fit_gmm(fa_latent_means(stage1, *c.data), gopts, seed);
      c.mog = refit_under_mixture(*c.data, std::move(stage1), std::move(g.mixture), config_.fa);
      c.mog->mixture_log_likelihood = g.log_likelihood;
    }
    return *c.mog;
  }

  static json fit_diagnostics(const FaModel& m, const ModelCache& c) {
    return json{{"latent_dim", m.latent_dim()},
                {"scree_latent_dim", c.scree_p},
                {"iterations", m.iterations},
                {"converged", m.converged},
                {"final_log_likelihood", m.log_likelihood.empty() ? 0.0 : m.log_likelihood.back()}};
  }

  EstimatorResult run_estimator(const EstimatorSpec& spec) {
    EstimatorResult res;
    res.estimator = spec.name();
    const auto n = samples_.size();
    std::vector<double> errors(n);
    try {
      switch (spec.kind) {
        case EstimatorKind::kMle:
          parallel_for(n, config_.workers, [&](std::size_t i) {
            errors[i] = summed_squared_error(mle_average(samples_[i]), truth_[i].values);
          });
          break;
        case EstimatorKind::kOracle: {
          const OracleBayes oracle(atoms_, view(spec.knowledge).k);
          std::vector<char> hit(n);
          parallel_for(n, config_.workers, [&](std::size_t i) {
            const Eigen::Index j = oracle.nearest_atom(samples_[i].beat_mean());
            hit[i] = static_cast<char>(j == static_cast<Eigen::Index>(i));
            errors[i] = summed_squared_error(atoms_.atoms.row(j).transpose(), truth_[i].values);
          });
          const auto hits = std::count(hit.begin(), hit.end(), char{1});
          res.diagnostics["correct_atom_fraction"] = static_cast<double>(hits) / static_cast<double>(n);
          break;
        }
        case EstimatorKind::kFa: {
          const FaModel& m = fa_model(spec.knowledge);
          const NoiseView& v = view(spec.knowledge);
          parallel_for(n, config_.workers, [&](std::size_t i) {
            errors[i] = summed_squared_error(fa_posterior_mean(m, samples_[i], v.k, v.taus[i], config_.residual),
                                             truth_[i].values);
          });
          res.diagnostics = fit_diagnostics(m, cache(spec.knowledge));
          break;
        }
        case EstimatorKind::kMogFa: {
          const MogFaModel& m = mog_model(spec.knowledge);
          const NoiseView& v = view(spec.knowledge);
          parallel_for(n, config_.workers, [&](std::size_t i) {
            errors[i] = summed_squared_error(
                mog_fa_posterior_mean(m, samples_[i], v.k, v.taus[i], config_.mixture_weighting, config_.residual),
                truth_[i].values);
          });
          res.diagnostics = fit_diagnostics(m.fa, cache(spec.knowledge));
          res.diagnostics["components"] = m.components();
          res.diagnostics["mixture_log_likelihood"] = m.mixture_log_likelihood;
          break;
        }
      }
      const SampleStats s = summarize(errors);
      res.ok = std::isfinite(s.mean);
      if (!res.ok) {
        res.error_code = std::string(to_string(ErrorCode::kFitDiverged));
        res.error_message = "non-finite squared error";
        return res;
      }
      res.mse = s.mean;
      res.se = s.se;
      res.mse_per_coordinate = s.mean / static_cast<double>(config_.simulation.d);
    } catch (const Error& e) {
      res.ok = false;
      res.error_code = std::string(to_string(e.code()));
      res.error_message = e.what();
    } catch (const std::exception& e) {
      res.ok = false;
      res.error_code = "internal";
      res.error_message = e.what();
    }
    return res;
  }

  const BenchmarkConfig& config_;
  const std::vector<ThetaBeat>& truth_;
  const AtomPrior& atoms_;
  std::size_t cell_index_;
  CellResult cell_;
  std::vector<EcgSample> samples_;
  NoiseView truth_view_;
  std::optional<NoiseView> estimated_view_;
  std::optional<Error> noise_error_;
  ModelCache caches_[2];
};

}  // namespace

const EstimatorResult* CellResult::find(const std::string& estimator) const {
  for (const auto& r : results) {
    if (r.estimator == estimator) return &r;
  }
  return nullptr;
}

const CellResult* BenchmarkReport::find(const TauRegime& regime, Eigen::Index beats) const {
  for (const auto& c : cells) {
    if (c.regime == regime && c.beats == beats) return &c;
  }
  return nullptr;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport report;
  report.config = config;
  report.library_version = ECGFA_VERSION;

  const std::vector<ThetaBeat> truth = simulate_ground_truth(config.simulation, config.num_samples, config.workers);
  const AtomPrior atoms{stack_truth(truth)};
  const CovarianceMatrix k_true = config.simulation.true_covariance();

  std::size_t cell_index = 0;
  for (const auto& regime : config.tau_regimes) {
    for (const auto b : config.beats) {
      CellRunner runner(config, truth, atoms, k_true, cell_index++, regime, b);
      report.cells.push_back(runner.run());
    }
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

json to_json(const BenchmarkConfig& c) {
  json regimes = json::array();
  for (const auto& r : c.tau_regimes) regimes.push_back(regime_to_json(r));
  json estimators = json::array();
  for (const auto& e : c.estimators) estimators.push_back(e.name());
  return json{
      {"num_samples", c.num_samples},
      {"beats", c.beats},
      {"tau_regimes", std::move(regimes)},
      {"d", c.simulation.d},
      {"fs", c.simulation.fs},
      {"r_offset", c.simulation.r_offset},
      {"jitter", c.simulation.jitter},
      {"amplitude_gain", c.simulation.amplitude_gain},
      {"matern", {{"lengthscale_s", c.simulation.lengthscale_s}, {"smoothness", c.simulation.smoothness}}},
      {"estimators", std::move(estimators)},
      {"latent_dim",
       c.latent_dim.scree ? json{{"mode", "scree"}, {"slope_cutoff", c.latent_dim.slope_cutoff}}
                          : json{{"mode", "fixed"}, {"value", c.latent_dim.fixed}}},
      {"components", c.components},
      {"mixture_weighting", c.mixture_weighting == MixtureWeighting::kPrior ? "prior" : "responsibility"},
      {"residual", c.residual == ResidualTreatment::kSignal ? "signal" : "noise"},
      {"fa",
       {{"max_iterations", c.fa.max_iterations},
        {"relative_tolerance", c.fa.relative_tolerance},
        {"variance_floor", c.fa.variance_floor},
        {"variance_substeps", c.fa.variance_substeps},
        {"isotropic_residual", c.fa.isotropic_residual}}},
      {"seed", c.simulation.seed},
  };
}

BenchmarkConfig benchmark_config_from_json(const json& j, BenchmarkConfig c) {
  try {
    if (!j.is_object()) fail(ErrorCode::kParseError, "config: expected an object");
    reject_unknown(j,
                   {"num_samples", "beats", "tau_regimes", "d", "fs", "r_offset", "jitter", "amplitude_gain", "matern",
                    "estimators", "latent_dim", "components", "mixture_weighting", "residual", "fa", "seed",
                    "workers"},
                   "config");
    c.num_samples = j.value("num_samples", c.num_samples);
    if (j.contains("beats")) c.beats = j.at("beats").get<std::vector<Eigen::Index>>();
    if (j.contains("tau_regimes")) {
      c.tau_regimes.clear();
      for (const auto& r : j.at("tau_regimes")) c.tau_regimes.push_back(regime_from_json(r));
    }
    auto& s = c.simulation;
    s.d = j.value("d", s.d);
    s.fs = j.value("fs", s.fs);
    s.r_offset = j.value("r_offset", s.r_offset);
    s.jitter = j.value("jitter", s.jitter);
    s.amplitude_gain = j.value("amplitude_gain", s.amplitude_gain);
    s.seed = j.value("seed", s.seed);
    if (j.contains("matern")) {
      const auto& m = j.at("matern");
      reject_unknown(m, {"lengthscale_s", "smoothness"}, "config.matern");
      s.lengthscale_s = m.value("lengthscale_s", s.lengthscale_s);
      s.smoothness = m.value("smoothness", s.smoothness);
    }
    if (j.contains("estimators")) {
      c.estimators.clear();
      for (const auto& e : j.at("estimators")) c.estimators.push_back(EstimatorSpec::parse(e.get<std::string>()));
    }
    if (j.contains("latent_dim")) {
      const auto& l = j.at("latent_dim");
      reject_unknown(l, {"mode", "value", "slope_cutoff"}, "config.latent_dim");
      const std::string mode = l.value("mode", std::string("fixed"));
      if (mode != "fixed" && mode != "scree") fail(ErrorCode::kParseError, "config.latent_dim.mode must be fixed or scree");
      c.latent_dim.scree = mode == "scree";
      c.latent_dim.fixed = l.value("value", c.latent_dim.fixed);
      c.latent_dim.slope_cutoff = l.value("slope_cutoff", c.latent_dim.slope_cutoff);
    }
    c.components = j.value("components", c.components);
    if (j.contains("mixture_weighting")) {
      const std::string w = j.at("mixture_weighting").get<std::string>();
      if (w == "responsibility") {
        c.mixture_weighting = MixtureWeighting::kResponsibility;
      } else if (w == "prior") {
        c.mixture_weighting = MixtureWeighting::kPrior;
      } else {
        fail(ErrorCode::kParseError, "config.mixture_weighting must be responsibility or prior");
      }
    }
    if (j.contains("residual")) {
      const std::string r = j.at("residual").get<std::string>();
      if (r != "noise" && r != "signal") fail(ErrorCode::kParseError, "config.residual must be noise or signal");
      c.residual = r == "signal" ? ResidualTreatment::kSignal : ResidualTreatment::kNoise;
    }
    if (j.contains("fa")) {
      const auto& f = j.at("fa");
      reject_unknown(f, {"max_iterations", "relative_tolerance", "variance_floor", "variance_substeps", "isotropic_residual"},
                    "config.fa");
      c.fa.max_iterations = f.value("max_iterations", c.fa.max_iterations);
      c.fa.relative_tolerance = f.value("relative_tolerance", c.fa.relative_tolerance);
      c.fa.variance_floor = f.value("variance_floor", c.fa.variance_floor);
      c.fa.variance_substeps = f.value("variance_substeps", c.fa.variance_substeps);
      c.fa.isotropic_residual = f.value("isotropic_residual", c.fa.isotropic_residual);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, "config: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

json to_json(const BenchmarkReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json results = json::array();
    for (const auto& e : c.results) {
      json item{{"estimator", e.estimator}, {"status", e.ok ? "ok" : "failed"}, {"diagnostics", e.diagnostics}};
      if (e.ok) {
        item["mse"] = e.mse;
        item["se"] = e.se;
        item["mse_per_coordinate"] = e.mse_per_coordinate;
      } else {
        item["error"] = {{"code", e.error_code}, {"message", e.error_message}};
      }
      results.push_back(std::move(item));
    }
    cells.push_back({{"regime", c.regime.label()},
                     {"tau", regime_to_json(c.regime)},
                     {"beats", c.beats},
                     {"num_samples", c.num_samples},
                     {"mean_noise_variance", c.mean_noise_variance},
                     {"noise_estimation", c.noise_estimation},
                     {"results", std::move(results)}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"library_version", r.library_version},
              {"mse_convention", "summed squared error per beat, averaged over samples"},
              {"config", to_json(r.config)},
              {"cells", std::move(cells)},
              {"wall_clock_seconds", r.wall_clock_seconds}};
}

BenchmarkReport benchmark_report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      fail(ErrorCode::kParseError, "report: unsupported schema_version");
    }
    BenchmarkReport r;
    r.config = benchmark_config_from_json(j.at("config"));
    r.library_version = j.value("library_version", std::string());
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    for (const auto& c : j.at("cells")) {
      CellResult cell;
      cell.regime = regime_from_json(c.at("tau"));
      cell.beats = c.at("beats").get<Eigen::Index>();
      cell.num_samples = c.value("num_samples", Eigen::Index{0});
      cell.mean_noise_variance = c.value("mean_noise_variance", 0.0);
      cell.noise_estimation = c.value("noise_estimation", json::object());
      for (const auto& e : c.at("results")) {
        EstimatorResult res;
        res.estimator = e.at("estimator").get<std::string>();
        res.ok = e.at("status").get<std::string>() == "ok";
        res.diagnostics = e.value("diagnostics", json::object());
        if (res.ok) {
          res.mse = e.at("mse").get<double>();
          res.se = e.at("se").get<double>();
          res.mse_per_coordinate = e.at("mse_per_coordinate").get<double>();
        } else {
          res.error_code = e.at("error").value("code", std::string());
          res.error_message = e.at("error").value("message", std::string());
        }
        cell.results.push_back(std::move(res));
      }
      r.cells.push_back(std::move(cell));
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParseError, "report: " + std::string(e.what()));
  }
}

void write_report(const std::filesystem::path& path, const BenchmarkReport& report) {
  write_text_atomic(path, to_json(report).dump(2) + "\n");
}

}  // namespace ecgfa
