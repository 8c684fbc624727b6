#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ecgfa {

enum class Wave : int { P = 0, Q, R, S, T };
inline constexpr int kNumWaves = 5;

struct WaveParams {
  double amplitude = 0.0;  // a_i
  double width = 1.0;      // b_i, radians
  double position = 0.0;   // theta_i, radians in (-pi, pi]

  friend bool operator==(const WaveParams&, const WaveParams&) = default;
};

// Parameters of the McSharry dynamical ECG model for one subject.
struct OdeParams {
  std::array<WaveParams, kNumWaves> waves{};
  double baseline_mv = 0.0;          // x0
  double angular_frequency = 0.0;    // omega, rad/s

  // Published McSharry defaults at 60 bpm.
  static OdeParams mcsharry_defaults();

  [[nodiscard]] const WaveParams& wave(Wave w) const { return waves[static_cast<int>(w)]; }
  WaveParams& wave(Wave w) { return waves[static_cast<int>(w)]; }

  [[nodiscard]] double period_seconds() const;
  [[nodiscard]] bool is_valid() const;
  // Throws kInvalidArgument describing the first violated invariant.
  void validate() const;

  // Copy with every a_i multiplied by `gain`. The x equation is linear in the
  // amplitudes, so this scales (x - x0) of the steady-state beat by `gain`.
  [[nodiscard]] OdeParams with_amplitude_gain(double gain) const;

  friend bool operator==(const OdeParams&, const OdeParams&) = default;
};

struct OdeState {
  double u = 1.0;
  double v = 0.0;
  double x = 0.0;
};

struct RawTrace {
  double fs = 0.0;            // Hz
  Eigen::VectorXd samples;    // mV

  [[nodiscard]] Eigen::Index length() const { return samples.size(); }
};

struct ThetaBeat {
  Eigen::VectorXd values;     // mV, length d
  Eigen::Index r_peak_index = 0;
  double fs = 0.0;

  [[nodiscard]] Eigen::Index length() const { return values.size(); }
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

// Right-hand side of the coupled ODE.
OdeState mcsharry_derivative(const OdeParams& params, const OdeState& state);

// Full state sampled at t_k = k / fs, k = 0..round(duration * fs), using
// classical RK4 with `steps_per_sample` substeps (h = 1 / (steps_per_sample * fs)).
std::vector<OdeState> simulate_states(const OdeParams& params, double duration_s, double fs,
                                      const OdeState& initial, int steps_per_sample = 4);

// x-component of simulate_states.
RawTrace integrate_mcsharry(const OdeParams& params, double duration_s, double fs,
                            const OdeState& initial, int steps_per_sample = 4);

// Jitters amplitudes, widths and baseline multiplicatively by U(1-f, 1+f) and
// shifts positions by U(-f|theta_i|, f|theta_i|). Redraws (bounded) until the
// result is valid.
OdeParams sample_jittered_params(const OdeParams& base, double jitter_fraction, std::uint64_t seed);

Eigen::Index default_r_offset(Eigen::Index d);

// State at angle 0 on the limit cycle whose x-component repeats after one
// period under the same RK4 step, so traces started here have no transient.
OdeState periodic_initial_state(const OdeParams& params, double fs, int steps_per_sample = 4);

// Steady-state beat of length d with the R-peak at `r_offset`.
ThetaBeat extract_canonical_beat(const OdeParams& params, double fs, Eigen::Index d,
                                 Eigen::Index r_offset);
inline ThetaBeat extract_canonical_beat(const OdeParams& params, double fs, Eigen::Index d) {
  return extract_canonical_beat(params, fs, d, default_r_offset(d));
}

}  // namespace ecgfa
