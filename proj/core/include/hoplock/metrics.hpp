#pragma once

#include <optional>
#include <vector>

#include "hoplock/scenario.hpp"
#include "hoplock/sim.hpp"

namespace hoplock {

struct EnvelopePoint {
  double t = 0.0;
  double peak = 0.0;
};

/// Half-period peak sequence of a near-periodic signal: the max |x|
/// between consecutive zero crossings.
std::vector<EnvelopePoint> half_period_envelope(const std::vector<double>& t,
                                                const std::vector<double>& x);

struct LockResult {
  bool locked = false;
  double seconds = 0.0;
  double cycles = 0.0;
};

/// First time after hop_start at which the attacker current envelope stays
/// at or above threshold times the new steady-state peak for three
/// consecutive half periods.
LockResult lock_time(const Trace& trace, double hop_start, double hop_end,
                     double threshold = 0.9);

/// Mean load power of one receiver over an integer number of periods
/// inside [w0, w1]. Throws ConfigError when the window is shorter than
/// one period of the active frequency.
double steady_state_power(const Trace& trace, std::size_t rx_index, double w0,
                          double w1);

/// Phase of signal a minus phase of signal b in degrees, from the
/// fundamental component at the trace's active frequency over integer
/// periods inside [w0, w1]. Positive means a leads b. Range (-180, 180].
double phase_between(const Trace& trace, const std::vector<double>& a,
                     const std::vector<double>& b, double w0, double w1);

/// Hop instants recovered from the f_t column (including t = 0 when
/// excitation starts there).
std::vector<double> hop_instants(const Trace& trace);

struct HopMetrics {
  int index = 0;
  double t_start = 0.0, t_end = 0.0;
  double freq_hz = 0.0;
  LockResult lock;
  double attacker_power_w = 0.0;
  std::vector<double> fixed_power_w;
  double matched_power_w = 0.0;
  double stolen_ratio = 0.0;
  double phase_error_deg = 0.0;  ///< attacker lead over I_T minus 90
  double switching_loss_w = 0.0;
};

struct Metrics {
  std::vector<HopMetrics> hops;
};

/// Everything is computed from the trace alone, so analyzing a saved CSV
/// reproduces the in-run metrics exactly.
Metrics compute_metrics(const Trace& trace, double lock_threshold = 0.9);

struct SweepPoint {
  double t_off = 0.0;
  double i_r_amplitude = 0.0;
  double phase_deg = 0.0;
};

/// Steady-state response versus off time at a fixed frequency, with the
/// attack controller bypassed by a fixed-duty playback.
std::vector<SweepPoint> duty_sweep(const Scenario& scenario, double freq_hz,
                                   const std::vector<double>& t_off_values);

}  // namespace hoplock
