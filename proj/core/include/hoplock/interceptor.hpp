#pragma once

#include <deque>
#include <optional>

#include "hoplock/design.hpp"
#include "hoplock/sim.hpp"

namespace hoplock {

struct ControllerConfig {
  SenseMode sense_mode = SenseMode::kCapacitorVoltage;
  double t_filter = 0.75e-6;
  double estimation_window = 100e-6;
  double adopt_radius_hz = 1000.0;
  double phase_tolerance_deg = 2.0;
  double trim_gain = 0.5;
  double distortion_rel_tol = 0.3;
  int distortion_count = 3;
  bool regulation_enabled = true;
  /// Enables the transmitter-phase oracle tap and online duty trimming;
  /// lab-calibration analogue, never used in attack runs.
  bool calibration_mode = false;

  /// Per-stage time constant of the two-pole sensing low-pass. Larger
  /// values suppress the switching harmonics that bias the zero
  /// crossings; the fundamental's phase lag is compensated exactly from
  /// the operating frequency, so the delay itself costs nothing.
  double filter_stage_tau = 4e-6;

  double hysteresis_frac = 0.02;      ///< of the sensed signal's running peak
  int min_adopt_edges = 4;            ///< early table adoption needs this many
  double refine_threshold_hz = 200.0; ///< duty recompute hysteresis

  void validate(double f_l) const;
};

struct ControllerState {
  CtrlMode mode = CtrlMode::kSense;
  std::deque<double> edge_buffer;  ///< upward edge timestamps
  double freq_estimate = 0.0;
  std::optional<FrequencyTableEntry> active_entry;
  double phase_error_deg = 0.0;
  int distortion_flags = 0;
};

/// Mean frequency from upward edges inside the window: (n-1)/span.
/// Throws NumericError with fewer than two edges.
double estimate_frequency(const std::deque<double>& edge_buffer,
                          double window);

/// True when any inter-edge interval deviates from 1/freq_estimate by more
/// than the relative tolerance.
bool detect_distortion(const std::deque<double>& edge_buffer,
                       double freq_estimate, const ControllerConfig& config);

/// Length of one calibration trim cycle: phase is measured over the last
/// few periods of each cycle and t_on nudged between cycles.
inline constexpr double kTrimCyclePeriods = 24.0;

/// Proportional multiplicative trim of t_on toward a 90 degree lead,
/// limited to +-10% per call and clamped to [t_on_min, t_on_max].
DutyTimes regulate_phase(double phase_diff_deg, DutyTimes duty,
                         const ControllerConfig& config, double t_on_min,
                         double t_on_max);

/// Design constants the controller needs for on-the-fly duty computation.
struct DutyDesign {
  double l_r = 0.0;
  double c_r1 = 0.0;
  double c_r2 = 0.0;
  double r_load = 5.0;  ///< sets the settling window for calibration trims
};

/// The attack state machine: sense through the power coil, estimate the
/// hopping frequency from filtered zero crossings, adopt the nearest
/// memorized duty cycle, actuate the switch, refine continuously, and
/// restart on waveform distortion.
class InterceptController final : public ControllerBase {
 public:
  InterceptController(const ControllerConfig& config, FrequencyTable table,
                      const DutyDesign& design);

  bool step(const Observation& obs) override;
  CtrlMode mode() const override { return state_.mode; }
  double freq_estimate() const override { return state_.freq_estimate; }
  double active_t_on() const override {
    return state_.active_entry ? duty_.t_on : 0.0;
  }
  bool wants_oracle() const override { return config_.calibration_mode; }

  const ControllerState& state() const { return state_; }
  const FrequencyTable& table() const { return table_; }
  const ControllerConfig& config() const { return config_; }
  const DutyTimes& active_duty() const { return duty_; }
  /// Number of distortion-triggered restarts so far.
  int restarts() const { return restarts_; }
  /// Estimates that landed outside the achievable band.
  int unreachable_events() const { return unreachable_events_; }
  /// Trims applied in calibration mode.
  int trims() const { return trims_; }
  /// Anchor of the running switch pattern (debug/inspection).
  double anchor_zero() const { return anchor_zero_; }
  bool calibration_converged() const { return calibration_converged_; }
  bool finished() const override {
    return config_.calibration_mode && calibration_converged_;
  }

 private:
  void on_upward_edge(double t_edge);
  void track_anchor(double target, double t_edge, double period);
  void engage(const FrequencyTableEntry& entry, double t);
  void restart_sense(double t, double cooldown);
  DutyTimes duty_for(const FrequencyTableEntry& entry) const;
  double t_on_min() const;
  void update_regulation(const Observation& obs);

  ControllerConfig config_;
  FrequencyTable table_;
  DutyDesign design_;
  ControllerState state_;

  HysteresisComparator comparator_;
  TwoPoleLowPass filter_;
  double running_peak_ = 0.0;
  double last_t_ = 0.0;
  bool have_last_t_ = false;

  double estimate_start_ = 0.0;
  double sense_cooldown_until_ = 0.0;
  double anchor_zero_ = 0.0;
  double engage_time_ = -1.0;
  double last_suspicious_interval_ = 0.0;
  DutyTimes duty_;
  int restarts_ = 0;
  int unreachable_events_ = 0;

  // calibration-mode phase regulation
  double corr_sin_ = 0.0, corr_cos_ = 0.0;
  double trim_cycle_start_ = -1.0;
  double measure_start_ = 0.0;
  int trims_ = 0;
  bool calibration_converged_ = false;
  double prev_trim_err_ = 0.0;
  bool have_prev_trim_ = false;
  double trim_gain_now_ = 0.0;
  int converged_streak_ = 0;
};

/// Minimal controller for duty sweeps and calibration plants: locks onto
/// the sensed waveform and plays back one fixed duty cycle at a known
/// frequency. No estimation, no restart.
class DutyPlayback final : public ControllerBase {
 public:
  DutyPlayback(double freq_hz, DutyTimes duty, SenseMode sense_mode,
               double filter_stage_tau, double hysteresis_frac = 0.02);

  bool step(const Observation& obs) override;
  CtrlMode mode() const override {
    return engaged_ ? CtrlMode::kEngage : CtrlMode::kSense;
  }
  double freq_estimate() const override { return freq_; }
  double active_t_on() const override { return engaged_ ? duty_.t_on : 0.0; }

 private:
  void on_edge(double t_edge);

  double freq_;
  DutyTimes duty_;
  SenseMode sense_mode_;
  double hysteresis_frac_;
  double filter_delay_ = 0.0;
  HysteresisComparator comparator_;
  TwoPoleLowPass filter_;
  double running_peak_ = 0.0;
  double last_t_ = 0.0;
  bool have_last_t_ = false;
  bool engaged_ = false;
  double anchor_zero_ = 0.0;
  double last_edge_ = 0.0;
};

/// Phase delay of the two-pole sensing low-pass at the given frequency,
/// in seconds: 2*atan(w*tau)/w.
double sense_filter_delay(double stage_tau, double freq_hz);

/// Switch state for a duty pattern anchored at an upward current zero:
/// open for t_off/2 on both sides of every half-period boundary, closed
/// for one t_on interval per half cycle.
bool switch_pattern_closed(double t, double anchor_zero, const DutyTimes& duty);

}  // namespace hoplock
