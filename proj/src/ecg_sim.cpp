#include "ecgfa/ecg_sim.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ecgfa/error.hpp"
#include "ecgfa/rng.hpp"

namespace ecgfa {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kJitterRetries = 64;
constexpr int kBurnInCycles = 3;

const char* wave_name(int i) {
  static constexpr const char* kNames[kNumWaves] = {"P", "Q", "R", "S", "T"};
  return kNames[i];
}

OdeState axpy(const OdeState& s, double h, const OdeState& k) {
  return {s.u + h * k.u, s.v + h * k.v, s.x + h * k.x};
}

OdeState rk4_step(const OdeParams& params, const OdeState& s, double h) {
  const OdeState k1 = mcsharry_derivative(params, s);
  const OdeState k2 = mcsharry_derivative(params, axpy(s, 0.5 * h, k1));
  const OdeState k3 = mcsharry_derivative(params, axpy(s, 0.5 * h, k2));
  const OdeState k4 = mcsharry_derivative(params, axpy(s, h, k3));
  return {s.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
          s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
          s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x)};
}

}  // namespace

OdeParams OdeParams::mcsharry_defaults() {
  OdeParams p;
  p.waves[0] = {1.2, 0.25, -kPi / 3.0};
  p.waves[1] = {-5.0, 0.1, -kPi / 12.0};
  p.waves[2] = {30.0, 0.1, 0.0};
  p.waves[3] = {-7.5, 0.1, kPi / 12.0};
  p.waves[4] = {0.75, 0.4, kPi / 2.0};
  p.baseline_mv = 0.0;
  p.angular_frequency = 2.0 * kPi;
  return p;
}

double OdeParams::period_seconds() const { return 2.0 * kPi / angular_frequency; }

bool OdeParams::is_valid() const {
  try {
    validate();
  } catch (const Error&) {
    return false;
  }
  return true;
}

void OdeParams::validate() const {
  require(std::isfinite(angular_frequency) && angular_frequency > 0.0,
          "OdeParams: angular frequency must be finite and > 0");
  require(std::isfinite(baseline_mv), "OdeParams: baseline must be finite");
  for (int i = 0; i < kNumWaves; ++i) {
    const auto& w = waves[i];
    const std::string tag = std::string("OdeParams: wave ") + wave_name(i);
    require(std::isfinite(w.amplitude), tag + " amplitude must be finite");
    require(std::isfinite(w.width) && w.width > 0.0, tag + " width must be > 0");
    require(std::isfinite(w.position) && w.position > -kPi && w.position <= kPi,
            tag + " position must lie in (-pi, pi]");
    if (i > 0) {
      require(waves[i - 1].position < w.position,
              tag + " position must exceed the preceding wave position");
    }
  }
}

OdeParams OdeParams::with_amplitude_gain(double gain) const {
  OdeParams out = *this;
  for (auto& w : out.waves) w.amplitude *= gain;
  return out;
}

double wrap_angle(double radians) {
  double r = std::remainder(radians, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

OdeState mcsharry_derivative(const OdeParams& params, const OdeState& s) {
  const double radius = std::hypot(s.u, s.v);
  const double alpha = 1.0 - radius;
  const double angle = std::atan2(s.v, s.u);
  const double omega = params.angular_frequency;

  double forcing = 0.0;
  for (const auto& w : params.waves) {
    const double delta = wrap_angle(angle - w.position);
    forcing += w.amplitude * delta * std::exp(-delta * delta / (2.0 * w.width * w.width));
  }
  return {alpha * s.u - omega * s.v, alpha * s.v + omega * s.u,
          -forcing - (s.x - params.baseline_mv)};
}

std::vector<OdeState> simulate_states(const OdeParams& params, double duration_s, double fs,
                                      const OdeState& initial, int steps_per_sample) {
  params.validate();
  require(std::isfinite(duration_s) && duration_s > 0.0, "simulate: duration must be > 0");
  require(std::isfinite(fs) && fs > 0.0, "simulate: fs must be > 0");
  require(steps_per_sample >= 1, "simulate: steps_per_sample must be >= 1");

  const auto num_samples = static_cast<std::size_t>(std::llround(duration_s * fs)) + 1;
  const double h = 1.0 / (static_cast<double>(steps_per_sample) * fs);

  std::vector<OdeState> out;
  out.reserve(num_samples);
  OdeState state = initial;
  out.push_back(state);
  std::size_t step = 0;
  for (std::size_t k = 1; k < num_samples; ++k) {
    for (int j = 0; j < steps_per_sample; ++j, ++step) {
      state = rk4_step(params, state, h);
      if (!std::isfinite(state.u) || !std::isfinite(state.v) || !std::isfinite(state.x)) {
        fail(ErrorCode::kIntegrationDiverged,
             "integrate_mcsharry: non-finite state at RK4 step " + std::to_string(step));
      }
    }
    out.push_back(state);
  }
  return out;
}

RawTrace integrate_mcsharry(const OdeParams& params, double duration_s, double fs,
                            const OdeState& initial, int steps_per_sample) {
  const auto states = simulate_states(params, duration_s, fs, initial, steps_per_sample);
  RawTrace trace;
  trace.fs = fs;
  trace.samples.resize(static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) trace.samples[static_cast<Eigen::Index>(k)] = states[k].x;
  return trace;
}

OdeParams sample_jittered_params(const OdeParams& base, double jitter_fraction, std::uint64_t seed) {
  base.validate();
  require(jitter_fraction >= 0.0 && jitter_fraction < 1.0,
          "sample_jittered_params: jitter_fraction must lie in [0, 1)");
  if (jitter_fraction == 0.0) return base;

  Rng rng(seed);
  std::uniform_real_distribution<double> scale(1.0 - jitter_fraction, 1.0 + jitter_fraction);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int attempt = 0; attempt < kJitterRetries; ++attempt) {
    OdeParams out = base;
    for (auto& w : out.waves) {
      w.amplitude *= scale(rng);
      w.width *= scale(rng);
      w.position += unit(rng) * jitter_fraction * std::abs(w.position);
    }
    out.baseline_mv *= scale(rng);
    if (out.is_valid()) return out;
  }
  fail(ErrorCode::kInvalidJitter, "sample_jittered_params: no valid draw after " +
                                      std::to_string(kJitterRetries) + " attempts");
}

Eigen::Index default_r_offset(Eigen::Index d) { return d / 3; }

OdeState periodic_initial_state(const OdeParams& params, double fs, int steps_per_sample) {
  params.validate();
  require(std::isfinite(fs) && fs > 0.0, "periodic_initial_state: fs must be > 0");
  require(steps_per_sample >= 1, "periodic_initial_state: steps_per_sample must be >= 1");
  // On the unit circle the x update over one cycle is affine, x_T = c x_0 + a;
  // two integrations give c and a, and the fixed point is a / (1 - c).
  const double h = 1.0 / (static_cast<double>(steps_per_sample) * fs);
  const auto steps = std::llround(params.period_seconds() / h);
  auto cycle = [&](double x0) {
    OdeState s{1.0, 0.0, x0};
    for (long long k = 0; k < steps; ++k) s = rk4_step(params, s, h);
    if (!std::isfinite(s.x)) fail(ErrorCode::kIntegrationDiverged, "periodic_initial_state: non-finite state");
    return s.x;
  };
  const double a = cycle(0.0);
  const double c = cycle(1.0) - a;
  return {1.0, 0.0, a / (1.0 - c)};
}

ThetaBeat extract_canonical_beat(const OdeParams& params, double fs, Eigen::Index d,
                                 Eigen::Index r_offset) {
  params.validate();
  require(std::isfinite(fs) && fs > 0.0, "extract_canonical_beat: fs must be > 0");
  require(d >= 1, "extract_canonical_beat: d must be >= 1");
  require(r_offset >= 0 && r_offset < d, "extract_canonical_beat: r_offset must lie in [0, d)");
  const double period = params.period_seconds();
  const double cycle_samples = fs * period;
  if (static_cast<double>(d) > cycle_samples) {
    fail(ErrorCode::kWindowTooLong, "extract_canonical_beat: d = " + std::to_string(d) +
                                        " exceeds one cycle (" + std::to_string(cycle_samples) +
                                        " samples)");
  }

  // The phase advances at exactly omega, so starting from angle 0 the R wave
  // of cycle k is reached at k*T + theta_R/omega.
  const RawTrace trace =
      integrate_mcsharry(params, (kBurnInCycles + 3) * period, fs, periodic_initial_state(params, fs));
  const double r_time = (kBurnInCycles + 1) * period + params.wave(Wave::R).position / params.angular_frequency;
  const auto search_begin = static_cast<Eigen::Index>(std::floor((r_time - 0.5 * period) * fs));
  const auto search_len = static_cast<Eigen::Index>(std::floor(cycle_samples));

  Eigen::Index rel = 0;
  trace.samples.segment(search_begin, search_len).maxCoeff(&rel);
  const Eigen::Index r_peak = search_begin + rel;
  const Eigen::Index start = r_peak - r_offset;

  ThetaBeat beat;
  beat.fs = fs;
  beat.values = trace.samples.segment(start, d);
  beat.values.maxCoeff(&beat.r_peak_index);
  return beat;
}

}  // namespace ecgfa
