#include "hoplock/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hoplock/interceptor.hpp"

namespace hoplock {

namespace {

constexpr double kDeg = 180.0 / kPi;

std::size_t index_at(const Trace& trace, double t) {
  auto it = std::lower_bound(trace.t.begin(), trace.t.end(), t);
  return static_cast<std::size_t>(it - trace.t.begin());
}

double wrap_deg(double d) {
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

}  // namespace

std::vector<EnvelopePoint> half_period_envelope(const std::vector<double>& t,
                                                const std::vector<double>& x) {
  std::vector<EnvelopePoint> env;
  double peak = 0.0, peak_t = 0.0;
  int sign = 0;
  bool open_segment = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int s = x[i] > 0 ? 1 : (x[i] < 0 ? -1 : 0);
    if (s != 0 && sign != 0 && s != sign) {
      if (open_segment) env.push_back({peak_t, peak});
      peak = 0.0;
      open_segment = true;
    }
    if (s != 0) sign = s;
    if (open_segment && std::fabs(x[i]) >= peak) {
      peak = std::fabs(x[i]);
      peak_t = t[i];
    }
  }
  return env;
}

LockResult lock_time(const Trace& trace, double hop_start, double hop_end,
                     double threshold) {
  LockResult out;
  if (trace.rx.empty() || trace.size() < 2) return out;
  const std::size_t i0 = index_at(trace, hop_start);
  const std::size_t i1 = std::min(index_at(trace, hop_end), trace.size());
  if (i1 <= i0 + 2) return out;
  const double freq = trace.f_t[std::min(i0, trace.size() - 1)];

  std::vector<double> tt(trace.t.begin() + i0, trace.t.begin() + i1);
  std::vector<double> xx(trace.rx[0].i_r.begin() + i0,
                         trace.rx[0].i_r.begin() + i1);
  const auto env = half_period_envelope(tt, xx);
  if (env.size() < 6) return out;

  const double tail_start = hop_end - 0.2 * (hop_end - hop_start);
  double ss = 0.0;
  std::size_t n_ss = 0;
  for (const auto& p : env)
    if (p.t >= tail_start) {
      ss += p.peak;
      ++n_ss;
    }
  if (n_ss == 0) return out;
  ss /= static_cast<double>(n_ss);
  if (!(ss > 0)) return out;

  const bool need_engaged =
      trace.has_attacker() &&
      std::any_of(trace.controller_mode.begin(), trace.controller_mode.end(),
                  [](std::uint8_t m) { return m != 0; });
  for (std::size_t k = 0; k + 2 < env.size(); ++k) {
    if (env[k].peak >= threshold * ss && env[k + 1].peak >= threshold * ss &&
        env[k + 2].peak >= threshold * ss) {
      if (need_engaged) {
        const std::size_t idx = std::min(index_at(trace, env[k].t),
                                         trace.size() - 1);
        if (trace.controller_mode[idx] !=
            static_cast<std::uint8_t>(CtrlMode::kEngage))
          continue;
      }
      out.locked = true;
      out.seconds = env[k].t - hop_start;
      out.cycles = freq > 0 ? out.seconds * freq : 0.0;
      return out;
    }
  }
  return out;
}

namespace {

struct Window {
  std::size_t i0, i1;  // half-open sample range trimmed to integer periods
  double freq;
};

Window integer_period_window(const Trace& trace, double w0, double w1) {
  if (trace.size() < 2) throw ConfigError("trace too short for analysis");
  std::size_t i0 = index_at(trace, w0);
  std::size_t i1 = std::min(index_at(trace, w1), trace.size());
  if (i1 <= i0) throw ConfigError("empty analysis window");
  const double freq = trace.f_t[std::min(i0, trace.size() - 1)];
  if (!(freq > 0)) throw ConfigError("no excitation in the analysis window");
  const double span = trace.t[i1 - 1] - trace.t[i0];
  const double periods = std::floor(span * freq);
  if (periods < 1.0)
    throw ConfigError("analysis window shorter than one period");
  const double start = trace.t[i1 - 1] - periods / freq;
  i0 = index_at(trace, start);
  return {i0, i1, freq};
}

}  // namespace

double steady_state_power(const Trace& trace, std::size_t rx_index, double w0,
                          double w1) {
  if (rx_index >= trace.rx.size()) throw ConfigError("no such receiver");
  const Window w = integer_period_window(trace, w0, w1);
  double acc = 0.0;
  for (std::size_t i = w.i0; i < w.i1; ++i)
    acc += trace.rx[rx_index].i_r[i] * trace.rx[rx_index].v_load[i];
  return acc / static_cast<double>(w.i1 - w.i0);
}

double phase_between(const Trace& trace, const std::vector<double>& a,
                     const std::vector<double>& b, double w0, double w1) {
  const Window w = integer_period_window(trace, w0, w1);
  const double t_ref = trace.t[w.i0];
  double sa = 0, ca = 0, sb = 0, cb = 0;
  for (std::size_t i = w.i0; i < w.i1; ++i) {
    const double th = kTwoPi * w.freq * (trace.t[i] - t_ref);
    const double sn = std::sin(th), cs = std::cos(th);
    sa += a[i] * sn;
    ca += a[i] * cs;
    sb += b[i] * sn;
    cb += b[i] * cs;
  }
  const double ma = std::hypot(sa, ca), mb = std::hypot(sb, cb);
  if (!(ma > 0) || !(mb > 0))
    throw NumericError("undefined phase for a degenerate signal");
  const double pa = std::atan2(ca, sa), pb = std::atan2(cb, sb);
  double d = (pa - pb) * kDeg;
  return wrap_deg(d == -180.0 ? 180.0 : d);
}

std::vector<double> hop_instants(const Trace& trace) {
  std::vector<double> hops;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.f_t[i] <= 0) continue;
    if (hops.empty() && (i == 0 || trace.f_t[i - 1] <= 0)) {
      hops.push_back(trace.t[i]);
    } else if (i > 0 && trace.f_t[i] != trace.f_t[i - 1] &&
               trace.f_t[i - 1] > 0) {
      hops.push_back(trace.t[i]);
    }
  }
  return hops;
}

Metrics compute_metrics(const Trace& trace, double lock_threshold) {
  Metrics m;
  const auto hops = hop_instants(trace);
  if (hops.empty() || trace.size() < 2) return m;
  const double t_end = trace.t.back();
  const std::size_t n_fixed =
      trace.rx.size() - (trace.has_attacker() ? 1 : 0);

  for (std::size_t h = 0; h < hops.size(); ++h) {
    HopMetrics hm;
    hm.index = static_cast<int>(h);
    hm.t_start = hops[h];
    hm.t_end = h + 1 < hops.size() ? hops[h + 1] : t_end;
    const std::size_t i0 = std::min(index_at(trace, hm.t_start),
                                    trace.size() - 1);
    hm.freq_hz = trace.f_t[i0];
    const double w0 = hm.t_end - 0.2 * (hm.t_end - hm.t_start);

    hm.lock = lock_time(trace, hm.t_start, hm.t_end, lock_threshold);
    try {
      std::size_t col = trace.has_attacker() ? 1 : 0;
      for (std::size_t k = 0; k < n_fixed; ++k)
        hm.fixed_power_w.push_back(
            steady_state_power(trace, col + k, w0, hm.t_end));
      if (!hm.fixed_power_w.empty())
        hm.matched_power_w =
            *std::max_element(hm.fixed_power_w.begin(), hm.fixed_power_w.end());
      if (trace.has_attacker()) {
        hm.attacker_power_w = steady_state_power(trace, 0, w0, hm.t_end);
        if (hm.matched_power_w > 0)
          hm.stolen_ratio = hm.attacker_power_w / hm.matched_power_w;
        const std::size_t iw = std::min(index_at(trace, w0), trace.size() - 1);
        if (trace.controller_mode[iw] ==
            static_cast<std::uint8_t>(CtrlMode::kEngage)) {
          hm.phase_error_deg =
              phase_between(trace, trace.rx[0].i_r, trace.i_t, w0, hm.t_end) -
              90.0;
        } else {
          hm.phase_error_deg = std::numeric_limits<double>::quiet_NaN();
        }
        const std::size_t ie = std::min(index_at(trace, hm.t_end),
                                        trace.size() - 1);
        hm.switching_loss_w =
            (trace.switch_loss_j[ie] - trace.switch_loss_j[i0]) /
            (hm.t_end - hm.t_start);
      }
    } catch (const Error&) {
      // short dwell or degenerate signals: lock info still stands
    }
    m.hops.push_back(hm);
  }
  return m;
}

std::vector<SweepPoint> duty_sweep(const Scenario& scenario, double freq_hz,
                                   const std::vector<double>& t_off_values) {
  std::vector<SweepPoint> out;
  const SystemParams& p = scenario.attacker;
  const double period = 1.0 / freq_hz;
  const double tau = 2.0 * p.l_r / p.r_load;
  const double settle = std::max(40.0 * period, 12.0 * tau);
  const double duration = settle + 6.0 * period;

  for (double t_off : t_off_values) {
    if (t_off < 0 || t_off > period / 2.0)
      throw ConfigError("sweep t_off outside [0, T/2]");
    DutyTimes duty{period / 2.0 - t_off, t_off, period};
    DutyPlayback ctrl(freq_hz, duty, scenario.controller.sense_mode,
                      scenario.controller.filter_stage_tau);
    RunInputs in;
    in.attacker = p;
    in.sim = scenario.sim;
    in.sim.duration = duration;
    in.sim.record_decimation = 1;
    in.schedule = {};
    in.schedule.entries.push_back({freq_hz, duration});
    RunResult rr = run(in, &ctrl);

    SweepPoint pt;
    pt.t_off = t_off;
    const double w0 = duration - 4.0 * period;
    std::vector<double> tt(rr.trace.t.begin() + index_at(rr.trace, w0),
                           rr.trace.t.end());
    std::vector<double> xx(rr.trace.rx[0].i_r.begin() + index_at(rr.trace, w0),
                           rr.trace.rx[0].i_r.end());
    const auto env = half_period_envelope(tt, xx);
    double acc = 0.0;
    for (const auto& e : env) acc += e.peak;
    pt.i_r_amplitude = env.empty() ? 0.0 : acc / env.size();
    try {
      pt.phase_deg =
          phase_between(rr.trace, rr.trace.rx[0].i_r, rr.trace.i_t, w0,
                        duration);
    } catch (const Error&) {
      pt.phase_deg = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace hoplock
