// Command-line front end: simulate, estimate-noise, denoise, benchmark, plot-data.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecgfa/bench.hpp"
#include "ecgfa/error.hpp"
#include "ecgfa/estimators.hpp"
#include "ecgfa/io.hpp"
#include "ecgfa/mog_fa.hpp"
#include "ecgfa/plot_data.hpp"
#include "ecgfa/rng.hpp"
#include "ecgfa/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ecgfa;

namespace {

void log(const std::string& msg) { std::cerr << "[ecgfa] " << msg << '\n'; }

fs::path output_root() {
  const char* env = std::getenv("ECGFA_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::current_path();
}

fs::path resolve_output(const std::string& given, const std::string& fallback) {
  if (!given.empty()) return given;
  return output_root() / fallback;
}

// Flag values; a --config document is applied on top of these.
struct Flags {
  std::string config_file;
  Eigen::Index num_samples = 1000;
  std::vector<Eigen::Index> beats{1, 20};
  std::vector<double> taus;
  std::vector<double> tau_uniform;
  Eigen::Index d = 493;
  double fs = 500.0;
  Eigen::Index r_offset = 164;
  double jitter = 0.1;
  double gain = 30.0;
  double lengthscale = 0.15;
  double smoothness = 2.5;
  std::vector<std::string> estimators;
  Eigen::Index latent_dim = 5;
  bool scree = false;
  double slope_cutoff = -0.8;
  int components = 5;
  std::string weighting = "responsibility";
  std::string residual = "noise";
  int max_iterations = 500;
  bool diagonal_residual = false;
  std::uint64_t seed = 0;
  int workers = 1;
};

void add_config_flags(CLI::App* app, Flags& f, bool grid) {
  app->add_option("--config", f.config_file, "JSON config; its keys override flags")->check(CLI::ExistingFile);
  app->add_option("-n,--num-samples", f.num_samples, "Number of samples N");
  app->add_option("-b,--beats", f.beats, grid ? "Beats per sample (list)" : "Beats per sample");
  app->add_option("--tau", f.taus, grid ? "Fixed tau regimes (list)" : "Fixed tau");
  app->add_option("--tau-uniform", f.tau_uniform, "Uniform tau regime LO HI")->expected(2);
  app->add_option("--d", f.d, "Beat length in samples");
  app->add_option("--fs", f.fs, "Sampling frequency (Hz)");
  app->add_option("--r-offset", f.r_offset, "R-peak index within the beat");
  app->add_option("--jitter", f.jitter, "Parameter jitter fraction");
  app->add_option("--gain", f.gain, "Amplitude gain on the default waves");
  app->add_option("--lengthscale", f.lengthscale, "Matern lengthscale (s)");
  app->add_option("--smoothness", f.smoothness, "Matern smoothness (0.5, 1.5, 2.5)");
  app->add_option("--latent-dim", f.latent_dim, "Fixed latent dimension p");
  app->add_flag("--scree", f.scree, "Choose p by the scree slope rule");
  app->add_option("--slope-cutoff", f.slope_cutoff, "Scree log-slope cutoff");
  app->add_option("--components", f.components, "Mixture components C");
  app->add_option("--mixture-weighting", f.weighting, "responsibility | prior")
      ->check(CLI::IsMember({"responsibility", "prior"}));
  app->add_option("--residual", f.residual, "FA residual diagonal in the posterior: noise | signal")
      ->check(CLI::IsMember({"noise", "signal"}));
  app->add_flag("--diagonal-residual", f.diagonal_residual, "Fit one FA residual variance per coordinate");
  app->add_option("--max-iterations", f.max_iterations, "EM iteration cap");
  app->add_option("--seed", f.seed, "RNG seed");
  app->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
}

BenchmarkConfig build_config(const Flags& f) {
  BenchmarkConfig c;
  c.num_samples = f.num_samples;
  c.beats = f.beats;
  if (!f.taus.empty() || !f.tau_uniform.empty()) {
    c.tau_regimes.clear();
    for (double t : f.taus) c.tau_regimes.push_back(TauRegime::fixed(t));
    if (!f.tau_uniform.empty()) c.tau_regimes.push_back(TauRegime::uniform_between(f.tau_uniform[0], f.tau_uniform[1]));
  }
  c.simulation.d = f.d;
  c.simulation.fs = f.fs;
  c.simulation.r_offset = f.r_offset;
  c.simulation.jitter = f.jitter;
  c.simulation.amplitude_gain = f.gain;
  c.simulation.lengthscale_s = f.lengthscale;
  c.simulation.smoothness = f.smoothness;
  c.simulation.seed = f.seed;
  if (!f.estimators.empty()) {
    c.estimators.clear();
    for (const auto& e : f.estimators) c.estimators.push_back(EstimatorSpec::parse(e));
  }
  c.latent_dim.fixed = f.latent_dim;
  c.latent_dim.scree = f.scree;
  c.latent_dim.slope_cutoff = f.slope_cutoff;
  c.components = f.components;
  c.mixture_weighting = f.weighting == "prior" ? MixtureWeighting::kPrior : MixtureWeighting::kResponsibility;
  c.residual = f.residual == "signal" ? ResidualTreatment::kSignal : ResidualTreatment::kNoise;
  c.fa.max_iterations = f.max_iterations;
  c.fa.isotropic_residual = !f.diagonal_residual;
  c.workers = f.workers;
  if (!f.config_file.empty()) return benchmark_config_from_json(read_json(f.config_file), c);
  c.validate();
  return c;
}

std::vector<NoisePrecision> true_taus(const Dataset& ds) {
  if (!ds.has_true_precision()) fail(ErrorCode::kInvalidArgument, "dataset has no true tau; use an :estimated estimator");
  std::vector<NoisePrecision> out;
  for (const auto& s : ds.samples) out.push_back(*s.true_precision);
  return out;
}

struct NoiseChoice {
  CovarianceMatrix k;
  std::vector<NoisePrecision> taus;
};

NoiseChoice noise_for(const Dataset& ds, NoiseKnowledge knowledge) {
  if (knowledge == NoiseKnowledge::kTruth) return {ds.settings.true_covariance(), true_taus(ds)};
  NoiseEstimate est = estimate_noise(ds.samples);
  return {std::move(est.covariance), std::move(est.precisions)};
}

// Per-sample estimates (N x d) from the chosen estimator; optionally the fitted model document.
Eigen::MatrixXd denoise_dataset(const Dataset& ds, const BenchmarkConfig& cfg, const EstimatorSpec& spec,
                                json* model_doc) {
  const auto n = static_cast<Eigen::Index>(ds.samples.size());
  Eigen::MatrixXd out(n, ds.settings.d);
  if (spec.kind == EstimatorKind::kMle) {
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = mle_average(ds.samples[static_cast<std::size_t>(i)]).transpose();
    return out;
  }
  const NoiseChoice noise = noise_for(ds, spec.knowledge);
  if (spec.kind == EstimatorKind::kOracle) {
    if (!ds.has_truth()) fail(ErrorCode::kInvalidArgument, "the oracle needs ground-truth beats in the dataset");
    AtomPrior atoms{Eigen::MatrixXd(n, ds.settings.d)};
    for (Eigen::Index i = 0; i < n; ++i) atoms.atoms.row(i) = ds.samples[static_cast<std::size_t>(i)].truth->values.transpose();
    const OracleBayes oracle(atoms, noise.k);
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = oracle.estimate(ds.samples[static_cast<std::size_t>(i)]).transpose();
    return out;
  }
  const FaData data = FaData::from_samples(ds.samples, noise.k, noise.taus);
  Eigen::Index p = cfg.latent_dim.fixed;
  if (cfg.latent_dim.scree) {
    const Eigen::VectorXd ev = data.covariance_eigenvalues();
    p = select_latent_dim(std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())),
                          cfg.latent_dim.slope_cutoff);
  }
  log("fitting " + spec.name() + " with p = " + std::to_string(p));
  if (spec.kind == EstimatorKind::kFa) {
    const FaModel m = fit_factor_analysis(data, p, cfg.fa);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      out.row(i) = fa_posterior_mean(m, ds.samples[ui], noise.k, noise.taus[ui], cfg.residual).transpose();
    }
    if (model_doc) *model_doc = to_json(m);
    return out;
  }
  MogFaOptions opts;
  opts.fa = cfg.fa;
  opts.gmm.components = cfg.components;
  opts.seed = derive_seed(cfg.simulation.seed, {static_cast<std::uint64_t>(Stream::kMixture)});
  const MogFaModel m = fit_mog_fa(data, p, opts);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.row(i) = mog_fa_posterior_mean(m, ds.samples[ui], noise.k, noise.taus[ui], cfg.mixture_weighting, cfg.residual)
                     .transpose();
  }
  if (model_doc) *model_doc = to_json(m);
  return out;
}

std::vector<std::string> sample_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  return ids;
}

void print_error(const std::string& code, const std::string& message) {
  std::cout << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-noise ECG beat simulation and denoising"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ECGFA_VERSION);

  Flags sim_flags;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset directory");
  add_config_flags(sim, sim_flags, false);
  sim->add_option("-o,--out", sim_out, "Dataset directory (default $ECGFA_OUTPUT_DIR/dataset)");

  std::string noise_dataset, noise_out;
  auto* noise = app.add_subcommand("estimate-noise", "Estimate K and per-sample tau from replicate beats");
  noise->add_option("--dataset", noise_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  noise->add_option("-o,--out", noise_out, "Output directory (default $ECGFA_OUTPUT_DIR/noise)");

  Flags den_flags;
  std::string den_dataset, den_estimator = "fa:estimated", den_out, den_model;
  auto* den = app.add_subcommand("denoise", "Per-sample denoised beats from one estimator");
  add_config_flags(den, den_flags, false);
  den->add_option("--dataset", den_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  den->add_option("-e,--estimator", den_estimator, "mle | oracle | fa | mog-fa, with :truth or :estimated");
  den->add_option("-o,--out", den_out, "Estimates CSV (default $ECGFA_OUTPUT_DIR/estimates.csv)");
  den->add_option("--model-out", den_model, "Write the fitted model JSON here");

  Flags bench_flags;
  std::string bench_out;
  auto* bench = app.add_subcommand("benchmark", "Run the estimator grid and write a JSON report");
  add_config_flags(bench, bench_flags, true);
  bench->add_option("-e,--estimators", bench_flags.estimators, "Estimator list");
  bench->add_option("-o,--out", bench_out, "Report path (default $ECGFA_OUTPUT_DIR/report.json)");

  std::string plot_kind, plot_report, plot_dataset, plot_sample, plot_estimator = "fa:truth", plot_out;
  int plot_bins = 20;
  bool plot_estimated = false;
  Flags plot_flags;
  auto* plot = app.add_subcommand("plot-data", "Write long-format CSV (series,x,y) for plotting");
  add_config_flags(plot, plot_flags, false);
  plot->add_option("--kind", plot_kind, "beats | tau-histogram | beat-count-histogram | mse")
      ->required()
      ->check(CLI::IsMember({"beats", "tau-histogram", "beat-count-histogram", "mse"}));
  plot->add_option("--report", plot_report, "Benchmark report (kind mse)")->check(CLI::ExistingFile);
  plot->add_option("--dataset", plot_dataset, "Dataset directory")->check(CLI::ExistingDirectory);
  plot->add_option("--sample", plot_sample, "Sample id (kind beats; default first)");
  plot->add_option("-e,--estimator", plot_estimator, "Estimator for the reconstruction (kind beats)");
  plot->add_option("--bins", plot_bins, "Histogram bins")->check(CLI::PositiveNumber);
  plot->add_flag("--estimated", plot_estimated, "Histogram estimated rather than true tau");
  plot->add_option("-o,--out", plot_out, "CSV path (default $ECGFA_OUTPUT_DIR/plot.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("invalid-argument", e.what());
    return 2;
  }

  try {
    if (sim->parsed()) {
      const BenchmarkConfig cfg = build_config(sim_flags);
      const fs::path out = resolve_output(sim_out, "dataset");
      log("simulating " + std::to_string(cfg.num_samples) + " samples, B = " + std::to_string(cfg.beats.front()) +
          ", " + cfg.tau_regimes.front().label());
      const Dataset ds = simulate_dataset(cfg.simulation, cfg.num_samples, cfg.beats.front(), cfg.tau_regimes.front(),
                                          cfg.workers);
      write_dataset(out, ds);
      std::cout << json{{"dataset", out.string()}, {"num_samples", ds.samples.size()}}.dump() << std::endl;
    } else if (noise->parsed()) {
      const Dataset ds = read_dataset(noise_dataset);
      const fs::path out = resolve_output(noise_out, "noise");
      const NoiseEstimate est = estimate_noise(ds.samples);
      fs::create_directories(out);
      write_matrix_csv(out / "K_hat.csv", est.covariance.matrix());
      Eigen::MatrixXd taus(static_cast<Eigen::Index>(est.precisions.size()), 1);
      for (std::size_t i = 0; i < est.precisions.size(); ++i) taus(static_cast<Eigen::Index>(i), 0) = est.precisions[i].tau();
      write_matrix_csv(out / "tau_hat.csv", taus, sample_ids(ds));
      json summary{{"k_hat", (out / "K_hat.csv").string()},
                   {"tau_hat", (out / "tau_hat.csv").string()},
                   {"trace", est.covariance.trace()}};
      if (ds.has_true_precision()) {
        const CovarianceMatrix k = ds.settings.true_covariance();
        summary["k_relative_frobenius_error"] = (est.covariance.matrix() - k.matrix()).norm() / k.matrix().norm();
      }
      std::cout << summary.dump() << std::endl;
    } else if (den->parsed()) {
      const BenchmarkConfig cfg = build_config(den_flags);
      const Dataset ds = read_dataset(den_dataset);
      const EstimatorSpec spec = EstimatorSpec::parse(den_estimator);
      json model;
      const Eigen::MatrixXd est = denoise_dataset(ds, cfg, spec, den_model.empty() ? nullptr : &model);
      const fs::path out = resolve_output(den_out, "estimates.csv");
      write_matrix_csv(out, est, sample_ids(ds));
      if (!den_model.empty()) write_text_atomic(den_model, model.dump(2) + "\n");
      json summary{{"estimates", out.string()}, {"estimator", spec.name()}};
      if (ds.has_truth()) {
        double total = 0.0;
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
          total += summed_squared_error(est.row(static_cast<Eigen::Index>(i)).transpose(), ds.samples[i].truth->values);
        }
        summary["mse"] = total / static_cast<double>(ds.samples.size());
      }
      std::cout << summary.dump() << std::endl;
    } else if (bench->parsed()) {
      const BenchmarkConfig cfg = build_config(bench_flags);
      const fs::path out = resolve_output(bench_out, "report.json");
      log("running " + std::to_string(cfg.tau_regimes.size() * cfg.beats.size()) + " cells with N = " +
          std::to_string(cfg.num_samples));
      const BenchmarkReport report = run_benchmark(cfg);
      for (const auto& cell : report.cells) {
        for (const auto& r : cell.results) {
          log(cell.regime.label() + " B=" + std::to_string(cell.beats) + " " + r.estimator + ": " +
              (r.ok ? std::to_string(r.mse) : "failed (" + r.error_code + ")"));
        }
      }
      write_report(out, report);
      std::cout << json{{"report", out.string()}, {"wall_clock_seconds", report.wall_clock_seconds}}.dump() << std::endl;
    } else if (plot->parsed()) {
      const fs::path out = resolve_output(plot_out, "plot.csv");
      std::vector<PlotRow> rows;
      if (plot_kind == "mse") {
        if (plot_report.empty()) fail(ErrorCode::kInvalidArgument, "--report is required for kind mse");
        rows = mse_table_rows(benchmark_report_from_json(read_json(plot_report)));
      } else {
        if (plot_dataset.empty()) fail(ErrorCode::kInvalidArgument, "--dataset is required for kind " + plot_kind);
        const Dataset ds = read_dataset(plot_dataset);
        if (plot_kind == "beats") {
          const BenchmarkConfig cfg = build_config(plot_flags);
          const Eigen::MatrixXd est = denoise_dataset(ds, cfg, EstimatorSpec::parse(plot_estimator), nullptr);
          std::size_t idx = 0;
          if (!plot_sample.empty()) {
            while (idx < ds.samples.size() && ds.samples[idx].id != plot_sample) ++idx;
            if (idx == ds.samples.size()) fail(ErrorCode::kInvalidArgument, "no sample '" + plot_sample + "'");
          }
          rows = beat_overlay_rows(ds.samples[idx], est.row(static_cast<Eigen::Index>(idx)).transpose(), ds.settings.fs);
        } else if (plot_kind == "tau-histogram") {
          const auto taus = plot_estimated ? estimate_noise(ds.samples).precisions : true_taus(ds);
          rows = tau_histogram_rows(taus, plot_bins);
        } else {
          rows = beat_count_histogram_rows(ds.samples);
        }
      }
      write_plot_csv(out, rows);
      std::cout << json{{"plot_data", out.string()}, {"rows", rows.size()}}.dump() << std::endl;
    }
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
