#include "hoplock/interceptor.hpp"

#include <algorithm>
#include <cmath>

namespace hoplock {

namespace {

constexpr double kPeakDecayTau = 200e-6;  // running-peak tracker
constexpr double kDeg = 180.0 / kPi;

double positive_mod(double x, double m) {
  double r = std::fmod(x, m);
  return r < 0 ? r + m : r;
}

}  // namespace

void ControllerConfig::validate(double f_l) const {
  if (t_filter < 0) throw ConfigError("t_filter must be non-negative");
  if (filter_stage_tau < 0)
    throw ConfigError("filter_stage_tau must be non-negative");
  if (!(estimation_window > 0) || !(adopt_radius_hz > 0) ||
      !(phase_tolerance_deg > 0) || !(trim_gain > 0) ||
      !(distortion_rel_tol > 0) || distortion_count < 1)
    throw ConfigError("controller config values must be positive");
  if (f_l > 0 && estimation_window < 3.0 / f_l)
    throw ConfigError("estimation_window must cover >= 3 periods of f_l");
}

double estimate_frequency(const std::deque<double>& edge_buffer,
                          double window) {
  if (edge_buffer.size() < 2)
    throw NumericError("insufficient edges for a frequency estimate");
  const double t_last = edge_buffer.back();
  double t_first = edge_buffer.front();
  std::size_t n = edge_buffer.size();
  for (std::size_t i = 0; i < edge_buffer.size(); ++i) {
    if (edge_buffer[i] >= t_last - window) {
      t_first = edge_buffer[i];
      n = edge_buffer.size() - i;
      break;
    }
  }
  if (n < 2) throw NumericError("insufficient edges inside the window");
  return static_cast<double>(n - 1) / (t_last - t_first);
}

bool detect_distortion(const std::deque<double>& edge_buffer,
                       double freq_estimate, const ControllerConfig& config) {
  if (freq_estimate <= 0 || edge_buffer.size() < 2) return false;
  const double expected = 1.0 / freq_estimate;
  for (std::size_t i = 1; i < edge_buffer.size(); ++i) {
    const double interval = edge_buffer[i] - edge_buffer[i - 1];
    if (std::fabs(interval - expected) > config.distortion_rel_tol * expected)
      return true;
  }
  return false;
}

DutyTimes regulate_phase(double phase_diff_deg, DutyTimes duty,
                         const ControllerConfig& config, double t_on_min,
                         double t_on_max) {
  const double err = phase_diff_deg - 90.0;
  if (std::fabs(err) <= config.phase_tolerance_deg) return duty;
  double factor = 1.0 + config.trim_gain * err / 90.0;
  factor = std::clamp(factor, 0.9, 1.1);
  double t_on = duty.t_on * factor;
  if (duty.t_on <= 0 && err > 0) t_on = 0.005 * duty.period;
  duty.t_on = std::clamp(t_on, t_on_min, t_on_max);
  duty.t_off = duty.period / 2.0 - duty.t_on;
  return duty;
}

double sense_filter_delay(double stage_tau, double freq_hz) {
  if (stage_tau <= 0 || freq_hz <= 0) return 0.0;
  const double w = 2.0 * kPi * freq_hz;
  return 2.0 * std::atan(w * stage_tau) / w;
}

bool switch_pattern_closed(double t, double anchor_zero,
                           const DutyTimes& duty) {
  if (duty.period <= 0 || duty.t_on <= 0) return false;
  if (duty.t_off <= 0) return true;
  const double half = duty.period / 2.0;
  const double tau = positive_mod(t - anchor_zero, half);
  return tau >= duty.t_off / 2.0 && tau < half - duty.t_off / 2.0;
}

InterceptController::InterceptController(const ControllerConfig& config,
                                         FrequencyTable table,
                                         const DutyDesign& design)
    : config_(config),
      table_(std::move(table)),
      design_(design),
      filter_(config.filter_stage_tau) {}

double InterceptController::t_on_min() const {
  // Fig. 4(a): with capacitor-voltage sensing the filter delay sets the
  // shortest usable on interval.
  return config_.sense_mode == SenseMode::kCapacitorVoltage ? config_.t_filter
                                                            : 0.0;
}

DutyTimes InterceptController::duty_for(const FrequencyTableEntry& entry) const {
  DutyTimes d = entry.duty;
  if (!config_.regulation_enabled && !config_.calibration_mode &&
      entry.origin != EntryOrigin::kComputed) {
    d = ton_toff(entry.freq_hz, design_.l_r, design_.c_r1, design_.c_r2);
  }
  d.t_on = std::clamp(d.t_on, t_on_min(), d.period / 2.0);
  d.t_off = d.period / 2.0 - d.t_on;
  return d;
}

void InterceptController::engage(const FrequencyTableEntry& entry, double t) {
  const bool was_running = state_.mode == CtrlMode::kEngage;
  state_.mode = CtrlMode::kEngage;
  state_.active_entry = entry;
  state_.distortion_flags = 0;
  duty_ = duty_for(entry);
  // The memorized frequency is authoritative once adopted; the live
  // estimate only decides which entry to use.
  if (entry.freq_hz > 0) state_.freq_estimate = entry.freq_hz;
  // Edges gathered before the pattern started (open-switch transients,
  // estimation ring-up) would poison the engaged refinement average.
  state_.edge_buffer.clear();
  state_.edge_buffer.push_back(t);
  trim_cycle_start_ = -1.0;
  corr_sin_ = corr_cos_ = 0.0;
  if (was_running) return;  // nearby re-adoption: keep the running anchor

  engage_time_ = t;
  // Seed the anchor from the adopting edge. With S_R still open the
  // receiver is the plain series L-C_R1-R branch, so the sensed current
  // leads the coupled field by a phase the attacker can compute from its
  // own components; correcting for it drops the pattern into the basin
  // of the 90-degree-lead operating point rather than a detuned one.
  const double period = duty_.period;
  const double w = 2.0 * kPi / period;
  const double phi_lead =
      std::atan2(1.0 / (w * design_.c_r1) - w * design_.l_r,
                 std::max(design_.r_load, 1e-9));
  double a = t - sense_filter_delay(config_.filter_stage_tau, 1.0 / period);
  if (config_.sense_mode == SenseMode::kCapacitorVoltage) a -= period / 4.0;
  anchor_zero_ = a + phi_lead / (2.0 * kPi) * period;
}

void InterceptController::restart_sense(double t, double cooldown) {
  state_.mode = CtrlMode::kSense;
  state_.active_entry.reset();
  state_.edge_buffer.clear();
  state_.distortion_flags = 0;
  sense_cooldown_until_ = t + cooldown;
}

void InterceptController::track_anchor(double target, double t_edge,
                                       double period) {
  // First-order phase tracking: snap right after engaging, then back the
  // gain off so crossing jitter averages away instead of being chased
  // edge by edge.
  if (period <= 0) return;
  const double periods_in = (t_edge - engage_time_) / period;
  const double gain = periods_in < 6.0 ? 1.0 : (periods_in < 20.0 ? 0.3 : 0.1);
  const double predicted =
      anchor_zero_ + period * std::round((target - anchor_zero_) / period);
  anchor_zero_ = predicted + gain * (target - predicted);
}

void InterceptController::on_upward_edge(double t_edge) {
  auto& buf = state_.edge_buffer;
  const double prev_edge = buf.empty() ? -1.0 : buf.back();
  // Capacitor jumps can fold several crossings into one period; while the
  // pattern runs, anything far earlier than the expected period is noise.
  if (state_.mode == CtrlMode::kEngage && prev_edge >= 0 &&
      state_.freq_estimate > 0 &&
      t_edge - prev_edge < 0.45 / state_.freq_estimate)
    return;
  buf.push_back(t_edge);
  while (!buf.empty() && buf.front() < t_edge - config_.estimation_window)
    buf.pop_front();

  switch (state_.mode) {
    case CtrlMode::kSense:
      if (t_edge >= sense_cooldown_until_) {
        state_.mode = CtrlMode::kEstimate;
        estimate_start_ = t_edge;
        buf.clear();
        buf.push_back(t_edge);
      }
      break;

    case CtrlMode::kEstimate: {
      if (buf.size() < 2) break;
      const double est = estimate_frequency(buf, config_.estimation_window);
      if (detect_distortion(buf, est, config_)) {
        // Likely a hop during the estimation interval; start over quietly.
        buf.clear();
        buf.push_back(t_edge);
        estimate_start_ = t_edge;
        break;
      }
      state_.freq_estimate = est;
      if (buf.size() >= static_cast<std::size_t>(config_.min_adopt_edges)) {
        if (FrequencyTableEntry* hit =
                table_.nearest(est, config_.adopt_radius_hz)) {
          ++hit->hits;
          engage(*hit, t_edge);
          break;
        }
      }
      if (t_edge - estimate_start_ >= config_.estimation_window) {
        // A full-window estimate can still carry a percent-level bias from
        // the ring-down transient; a memorized frequency nearby is the
        // better bet than a fresh entry at the biased value.
        if (FrequencyTableEntry* hit =
                table_.nearest(est, 3.0 * config_.adopt_radius_hz)) {
          ++hit->hits;
          engage(*hit, t_edge);
          break;
        }
        try {
          FrequencyTableEntry entry;
          entry.freq_hz = est;
          entry.duty = ton_toff(est, design_.l_r, design_.c_r1, design_.c_r2);
          entry.origin = EntryOrigin::kComputed;
          entry.hits = 1;
          table_.put(entry);
          engage(entry, t_edge);
        } catch (const OutOfBandError&) {
          ++unreachable_events_;
          restart_sense(t_edge, config_.estimation_window);
        }
      }
      break;
    }

    case CtrlMode::kEngage: {
      // Right after engaging, the capacitor jumps and the ring-down of the
      // open-circuit resonance distort the sensed crossings; those are
      // self-inflicted, not a hop, so the distortion counter waits.
      const double grace_periods = 6.0;
      const bool settling =
          state_.freq_estimate > 0 &&
          t_edge < engage_time_ + grace_periods / state_.freq_estimate;
      if (prev_edge >= 0 && state_.freq_estimate > 0) {
        const double expected = 1.0 / state_.freq_estimate;
        const double interval = t_edge - prev_edge;
        if (std::fabs(interval - expected) >
            config_.distortion_rel_tol * expected) {
          if (settling) break;  // self-inflicted transient, keep old anchor
          // A hop shows a steady new cadence; erratic spacing is only
          // switching noise and must not accumulate toward a restart.
          if (state_.distortion_flags > 0 &&
              std::fabs(interval - last_suspicious_interval_) >
                  config_.distortion_rel_tol * interval) {
            state_.distortion_flags = 0;
          }
          last_suspicious_interval_ = interval;
          if (++state_.distortion_flags >= config_.distortion_count &&
              !config_.calibration_mode) {
            ++restarts_;
            restart_sense(t_edge, 0.0);
            break;
          }
          break;  // suspicious edge: keep the old anchor
        }
        state_.distortion_flags = 0;
      }
      const double period =
          state_.freq_estimate > 0 ? 1.0 / state_.freq_estimate : duty_.period;
      track_anchor(
          t_edge - sense_filter_delay(config_.filter_stage_tau, 1.0 / period) -
              (config_.sense_mode == SenseMode::kCapacitorVoltage
                   ? period / 4.0
                   : 0.0),
          t_edge, period);
      // While the switch runs, occasional crossings are lost or doubled by
      // the capacitor jumps; refine only from intervals close to the
      // expected period so a single displaced edge cannot bias the
      // estimate. The gate is much tighter than the distortion tolerance:
      // a genuine hop is caught by the distortion counter, refinement only
      // polishes the last percent.
      // A calibrated entry's frequency is the attacker's own table value;
      // never let a drifting live estimate displace it (hops to another
      // table frequency arrive via the distortion restart instead).
      double est = 0.0;
      if (!config_.calibration_mode && buf.size() >= 2 &&
          state_.freq_estimate > 0 && state_.active_entry &&
          state_.active_entry->origin != EntryOrigin::kCalibrated) {
        const double expected = 1.0 / state_.freq_estimate;
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = 1; i < buf.size(); ++i) {
          const double iv = buf[i] - buf[i - 1];
          if (std::fabs(iv - expected) <= 0.05 * expected) {
            sum += iv;
            ++n;
          }
        }
        if (n >= 8) est = n / sum;
      }
      {
        if (est > 0 && state_.active_entry &&
            std::fabs(est - state_.freq_estimate) >
                config_.refine_threshold_hz) {
          FrequencyTableEntry* hit =
              table_.nearest(est, config_.adopt_radius_hz);
          if (hit != nullptr) {
            if (std::fabs(hit->freq_hz - state_.active_entry->freq_hz) > 0.5) {
              ++hit->hits;
              engage(*hit, t_edge);
            }
          } else if (!settling) {
            try {
              FrequencyTableEntry entry;
              entry.freq_hz = est;
              entry.duty =
                  ton_toff(est, design_.l_r, design_.c_r1, design_.c_r2);
              entry.origin = EntryOrigin::kRefined;
              entry.hits = 1;
              table_.put(entry);
              state_.freq_estimate = est;
              engage(entry, t_edge);
            } catch (const OutOfBandError&) {
              // A drifted estimate while locked on an in-band entry is a
              // measurement artifact, not a hop; keep the lock.
              ++unreachable_events_;
            }
          }
        }
      }
      break;
    }
  }
}

void InterceptController::update_regulation(const Observation& obs) {
  if (!config_.calibration_mode || !obs.oracle_valid ||
      state_.mode != CtrlMode::kEngage || calibration_converged_)
    return;
  const double period = duty_.period;
  if (period <= 0) return;
  const double cycle_len = kTrimCyclePeriods * period;
  if (trim_cycle_start_ < 0) {
    trim_cycle_start_ = obs.t;
    measure_start_ = obs.t + cycle_len - 4.0 * period;
    corr_sin_ = corr_cos_ = 0.0;
    return;
  }
  const double dt = obs.t - last_t_;
  if (obs.t >= measure_start_ && dt > 0) {
    corr_sin_ += obs.v_load * std::sin(obs.tx_phase) * dt;
    corr_cos_ += obs.v_load * std::cos(obs.tx_phase) * dt;
  }
  if (obs.t >= trim_cycle_start_ + cycle_len) {
    const double phase = std::atan2(corr_cos_, corr_sin_) * kDeg;
    state_.phase_error_deg = phase - 90.0;
    const double err = state_.phase_error_deg;
    const double tol = std::max(0.5, config_.phase_tolerance_deg);
    if (std::fabs(err) < tol) {
      // The pattern anchor keeps settling between cycles; declare success
      // only after the error stays inside the tolerance for a few cycles.
      if (++converged_streak_ >= 3) calibration_converged_ = true;
    } else {
      converged_streak_ = 0;
      // Small proportional trims let t_on and the pattern anchor settle
      // together; large steps outrun the anchor, whose equilibrium phase
      // moves steeply with t_on near resonance. The gain anneals on sign
      // flips and grows while the error keeps its sign.
      if (trim_gain_now_ <= 0)
        trim_gain_now_ = std::min(config_.trim_gain, 0.02);
      else if (have_prev_trim_ && err * prev_trim_err_ < 0)
        trim_gain_now_ = std::max(0.002, 0.5 * trim_gain_now_);
      else
        trim_gain_now_ = std::min(0.05, 1.25 * trim_gain_now_);
      prev_trim_err_ = err;
      have_prev_trim_ = true;
      ControllerConfig step_cfg = config_;
      step_cfg.trim_gain = trim_gain_now_;
      duty_ = regulate_phase(phase, duty_, step_cfg, t_on_min(),
                             duty_.period / 2.0 - 2.0 * config_.t_filter);
      ++trims_;
    }
    trim_cycle_start_ = obs.t;
    measure_start_ = obs.t + cycle_len - 4.0 * period;
    corr_sin_ = corr_cos_ = 0.0;
  }
}

bool InterceptController::step(const Observation& obs) {
  const double x = filter_.update(obs.t,
                                  config_.sense_mode ==
                                          SenseMode::kCapacitorVoltage
                                      ? obs.v_c1
                                      : obs.v_load);
  if (have_last_t_) {
    const double dt = obs.t - last_t_;
    if (dt > 0) running_peak_ *= std::max(0.0, 1.0 - dt / kPeakDecayTau);
  }
  running_peak_ = std::max(running_peak_, std::fabs(x));

  if (auto e = comparator_.update(obs.t, x,
                                  config_.hysteresis_frac * running_peak_)) {
    if (e->kind == EdgeKind::kUpward) on_upward_edge(e->t);
  }

  update_regulation(obs);

  last_t_ = obs.t;
  have_last_t_ = true;

  if (state_.mode != CtrlMode::kEngage) return false;
  return switch_pattern_closed(obs.t, anchor_zero_, duty_);
}

DutyPlayback::DutyPlayback(double freq_hz, DutyTimes duty, SenseMode sense_mode,
                           double filter_stage_tau, double hysteresis_frac)
    : freq_(freq_hz),
      duty_(duty),
      sense_mode_(sense_mode),
      hysteresis_frac_(hysteresis_frac),
      filter_(filter_stage_tau) {
  duty_.period = 1.0 / freq_hz;
  duty_.t_off = duty_.period / 2.0 - duty_.t_on;
  filter_delay_ = sense_filter_delay(filter_stage_tau, freq_hz);
}

void DutyPlayback::on_edge(double t_edge) {
  const double period = duty_.period;
  // The frequency is known here; reject crossings that arrive far off the
  // expected cadence so waveform jumps cannot drag the anchor.
  if (engaged_) {
    const double iv = t_edge - last_edge_;
    if (iv < 0.45 * period) return;
    last_edge_ = t_edge;
    if (std::fabs(iv - period) > 0.3 * period) return;
  } else {
    last_edge_ = t_edge;
  }
  const double target =
      t_edge - filter_delay_ -
      (sense_mode_ == SenseMode::kCapacitorVoltage ? period / 4.0 : 0.0);
  if (!engaged_) {
    anchor_zero_ = target;
  } else {
    const double predicted =
        anchor_zero_ + period * std::round((target - anchor_zero_) / period);
    anchor_zero_ = predicted + 0.1 * (target - predicted);
  }
  engaged_ = true;
}

bool DutyPlayback::step(const Observation& obs) {
  const double x = filter_.update(
      obs.t, sense_mode_ == SenseMode::kCapacitorVoltage ? obs.v_c1
                                                         : obs.v_load);
  if (have_last_t_) {
    const double dt = obs.t - last_t_;
    if (dt > 0) running_peak_ *= std::max(0.0, 1.0 - dt / kPeakDecayTau);
  }
  running_peak_ = std::max(running_peak_, std::fabs(x));
  if (auto ev = comparator_.update(obs.t, x, hysteresis_frac_ * running_peak_)) {
    if (ev->kind == EdgeKind::kUpward) on_edge(ev->t);
  }
  last_t_ = obs.t;
  have_last_t_ = true;
  if (!engaged_) return false;
  return switch_pattern_closed(obs.t, anchor_zero_, duty_);
}

}  // namespace hoplock
