#include "hoplock/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hoplock {

void SimConfig::validate(double max_scheduled_freq) const {
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  if (!(duration > 0)) throw ConfigError("duration must be positive");
  if (record_decimation < 1)
    throw ConfigError("record_decimation must be >= 1");
  if (max_scheduled_freq > 0 && dt > 1.0 / (100.0 * max_scheduled_freq)) {
    std::ostringstream os;
    os << "dt = " << dt << " s gives fewer than 100 steps per period at "
       << max_scheduled_freq << " Hz";
    throw ConfigError(os.str());
  }
}

void HysteresisComparator::reset() {
  have_prev_ = false;
  armed_up_ = armed_down_ = false;
  have_zero_up_ = have_zero_down_ = false;
}

std::optional<EdgeEvent> HysteresisComparator::update(double t, double x,
                                                      double hysteresis) {
  const double h = std::fabs(hysteresis);
  std::optional<EdgeEvent> out;
  if (have_prev_) {
    // Remember where the signal actually crossed zero; the hysteresis
    // band only confirms the crossing, it must not shift its timestamp.
    if (armed_up_ && prev_x_ < 0 && x >= 0 && x > prev_x_) {
      const double frac = (0.0 - prev_x_) / (x - prev_x_);
      zero_t_up_ = prev_t_ + frac * (t - prev_t_);
      have_zero_up_ = true;
    }
    if (armed_down_ && prev_x_ > 0 && x <= 0 && x < prev_x_) {
      const double frac = (0.0 - prev_x_) / (x - prev_x_);
      zero_t_down_ = prev_t_ + frac * (t - prev_t_);
      have_zero_down_ = true;
    }
    if (armed_up_ && prev_x_ < h && x >= h && x > prev_x_) {
      const double frac = (h - prev_x_) / (x - prev_x_);
      const double t_conf = prev_t_ + frac * (t - prev_t_);
      out = EdgeEvent{have_zero_up_ ? zero_t_up_ : t_conf, EdgeKind::kUpward, 0};
      armed_up_ = false;
      have_zero_up_ = false;
    } else if (armed_down_ && prev_x_ > -h && x <= -h && x < prev_x_) {
      const double frac = (-h - prev_x_) / (x - prev_x_);
      const double t_conf = prev_t_ + frac * (t - prev_t_);
      out = EdgeEvent{have_zero_down_ ? zero_t_down_ : t_conf,
                      EdgeKind::kDownward, 0};
      armed_down_ = false;
      have_zero_down_ = false;
    }
  }
  if (h > 0) {
    if (x <= -h) {
      armed_up_ = true;
      have_zero_up_ = false;
    }
    if (x >= h) {
      armed_down_ = true;
      have_zero_down_ = false;
    }
  } else {
    if (x < 0) armed_up_ = true;
    if (x > 0) armed_down_ = true;
  }
  prev_t_ = t;
  prev_x_ = x;
  have_prev_ = true;
  return out;
}

double TwoPoleLowPass::update(double t, double x) {
  if (tau_ <= 0) return x;
  if (!have_last_) {
    have_last_ = true;
    last_t_ = t;
    y1_ = y2_ = x;
    return x;
  }
  const double dt = t - last_t_;
  last_t_ = t;
  if (dt <= 0) return y2_;
  if (dt != cached_dt_) {
    cached_dt_ = dt;
    cached_a_ = std::exp(-dt / tau_);
  }
  y1_ = cached_a_ * y1_ + (1.0 - cached_a_) * x;
  y2_ = cached_a_ * y2_ + (1.0 - cached_a_) * y1_;
  return y2_;
}

void TwoPoleLowPass::reset() {
  y1_ = y2_ = 0.0;
  have_last_ = false;
  cached_dt_ = -1.0;
}

std::vector<EdgeEvent> detect_zero_cross(std::span<const double> samples,
                                         double t0, double dt,
                                         double hysteresis) {
  std::vector<EdgeEvent> events;
  HysteresisComparator cmp;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (auto e = cmp.update(t0 + static_cast<double>(i) * dt, samples[i],
                            hysteresis))
      events.push_back(*e);
  }
  return events;
}

std::vector<std::string> Trace::column_names() const {
  std::vector<std::string> cols = {"t_s", "i_t_a", "f_t_hz"};
  for (const auto& name : rx_names) {
    cols.push_back(name + "_i_r_a");
    cols.push_back(name + "_v_c1_v");
    cols.push_back(name + "_v_c2_v");
    cols.push_back(name + "_v_load_v");
    cols.push_back(name + "_switch_closed");
  }
  cols.push_back("controller_mode");
  cols.push_back("f_estimate_hz");
  cols.push_back("t_on_s");
  cols.push_back("switch_loss_j");
  return cols;
}

namespace {

void check_finite(const ReceiverState& s, std::size_t step, double t) {
  if (!s.finite()) {
    std::ostringstream os;
    os << "non-finite receiver state at step " << step << " (t = " << t
       << " s)";
    throw NumericError(os.str());
  }
}

}  // namespace

RunResult run(const RunInputs& inputs, ControllerBase* controller) {
  const SimConfig& cfg = inputs.sim;
  inputs.schedule.validate();
  inputs.defense.validate();
  cfg.validate(inputs.schedule.max_freq());
  if (inputs.attacker_present) inputs.attacker.validate();
  for (const auto& fx : inputs.fixed) fx.validate();

  const double dt = cfg.dt;
  const auto n_steps = static_cast<std::size_t>(
      std::llround(cfg.duration / dt));

  RunResult result;
  Trace& trace = result.trace;
  trace.sample_dt = dt * cfg.record_decimation;
  if (inputs.attacker_present) trace.rx_names.push_back("atk");
  for (std::size_t k = 0; k < inputs.fixed.size(); ++k) {
    trace.rx_names.push_back(k < inputs.fixed_names.size()
                                 ? inputs.fixed_names[k]
                                 : "fx" + std::to_string(k + 1));
  }
  trace.rx.resize(trace.rx_names.size());
  const std::size_t n_samples = n_steps / cfg.record_decimation + 1;
  trace.t.reserve(n_samples);

  TransmitterWave wave(inputs.attacker.i_t_amplitude);
  HopSequencer sequencer(inputs.schedule, cfg.seed);
  DefenseMonitor defense(inputs.defense);

  double seg_end = 0.0;
  bool have_excitation = false;
  auto start_hop = [&](double t, bool forced) {
    auto hop = sequencer.next();
    if (!hop) {
      seg_end = cfg.duration + dt;  // hold the last frequency
      return;
    }
    wave.append_segment(hop->freq_hz, t);
    seg_end = t + hop->dwell_s;
    have_excitation = true;
    result.hops.push_back({t, hop->freq_hz, hop->dwell_s, forced});
  };
  if (!inputs.schedule.empty()) start_hop(0.0, false);
  else seg_end = cfg.duration + dt;

  ReceiverState atk;
  std::vector<double> fx_i(inputs.fixed.size(), 0.0);
  std::vector<double> fx_v(inputs.fixed.size(), 0.0);
  double loss_j = 0.0;
  bool applied_cmd = false;
  bool pending_cmd = false;
  const bool oracle = controller != nullptr && controller->wants_oracle();

  auto record = [&](double t) {
    trace.t.push_back(t);
    trace.i_t.push_back(have_excitation ? wave.current(t) : 0.0);
    trace.f_t.push_back(have_excitation ? wave.active_freq(t) : 0.0);
    std::size_t col = 0;
    if (inputs.attacker_present) {
      auto& rc = trace.rx[col++];
      rc.i_r.push_back(atk.i_r);
      rc.v_c1.push_back(atk.v_c1);
      rc.v_c2.push_back(atk.v_c2);
      rc.v_load.push_back(atk.i_r * inputs.attacker.r_load);
      rc.switch_closed.push_back(atk.switch_closed ? 1 : 0);
    }
    for (std::size_t k = 0; k < inputs.fixed.size(); ++k) {
      auto& rc = trace.rx[col++];
      rc.i_r.push_back(fx_i[k]);
      rc.v_c1.push_back(fx_v[k]);
      rc.v_c2.push_back(0.0);
      rc.v_load.push_back(fx_i[k] * inputs.fixed[k].r_load);
      rc.switch_closed.push_back(0);
    }
    trace.controller_mode.push_back(
        controller ? static_cast<std::uint8_t>(controller->mode()) : 0);
    trace.f_estimate.push_back(controller ? controller->freq_estimate() : 0.0);
    trace.t_on.push_back(controller ? controller->active_t_on() : 0.0);
    trace.switch_loss_j.push_back(loss_j);
  };

  for (std::size_t step = 0; step <= n_steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    if (t >= seg_end && have_excitation) start_hop(t, false);

    // Controller observes the state at t; its command lands on the next
    // boundary.
    if (controller != nullptr && inputs.attacker_present) {
      Observation obs;
      obs.t = t;
      obs.v_c1 = atk.v_c1;
      obs.v_load = atk.i_r * inputs.attacker.r_load;
      obs.oracle_valid = oracle && have_excitation;
      if (obs.oracle_valid) {
        obs.tx_phase = wave.phase(t);
        obs.i_t = wave.current(t);
      }
      const bool cmd = controller->step(obs);
      applied_cmd = pending_cmd;
      pending_cmd = cmd;
    }

    if (step % static_cast<std::size_t>(cfg.record_decimation) == 0)
      record(t);
    if (step == n_steps) break;
    if (controller != nullptr && controller->finished()) break;

    double p_tx = 0.0, p_auth = 0.0;
    if (inputs.attacker_present) {
      EmfSamples e;
      if (have_excitation) {
        e.e0 = wave.emf(inputs.attacker.m_r, t);
        e.e_mid = wave.emf(inputs.attacker.m_r, t + 0.5 * dt);
        e.e1 = wave.emf(inputs.attacker.m_r, t + dt);
      }
      p_tx += e.e0 * atk.i_r;
      atk = step_attacker_receiver(atk, e, applied_cmd, inputs.attacker, dt,
                                   loss_j);
      check_finite(atk, step, t);
    }
    for (std::size_t k = 0; k < inputs.fixed.size(); ++k) {
      EmfSamples e;
      if (have_excitation) {
        e.e0 = wave.emf(inputs.fixed[k].m, t);
        e.e_mid = wave.emf(inputs.fixed[k].m, t + 0.5 * dt);
        e.e1 = wave.emf(inputs.fixed[k].m, t + dt);
      }
      p_tx += e.e0 * fx_i[k];
      p_auth += fx_i[k] * fx_i[k] * inputs.fixed[k].r_load;
      step_fixed_receiver(fx_i[k], fx_v[k], e, inputs.fixed[k], dt);
      if (!std::isfinite(fx_i[k]) || !std::isfinite(fx_v[k])) {
        std::ostringstream os;
        os << "non-finite fixed-receiver state at step " << step;
        throw NumericError(os.str());
      }
    }

    if (inputs.defense.enabled && have_excitation &&
        defense.update(t, dt, p_tx, p_auth, wave.active_freq(t))) {
      result.events.push_back("defense hop at t = " + std::to_string(t));
      start_hop(t + dt, true);
      defense.reset();
    }
  }

  return result;
}

}  // namespace hoplock
