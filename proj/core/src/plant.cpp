#include "hoplock/plant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hoplock {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void SystemParams::validate() const {
  require(l_t > 0, "l_t must be positive");
  require(l_r > 0, "l_r must be positive");
  require(m_r > 0, "m_r must be positive");
  require(c_r1 > 0, "c_r1 must be positive");
  require(c_r2 > 0, "c_r2 must be positive");
  require(r_load > 0, "r_load must be positive");
  require(i_t_amplitude > 0, "i_t_amplitude must be positive");
  require(delta_v_d >= 0, "delta_v_d must be non-negative");
  require(r_switch >= 0, "r_switch must be non-negative");
  require(m_r <= std::sqrt(l_t * l_r) * (1 + 1e-12),
          "m_r exceeds sqrt(l_t * l_r)");
}

void FixedReceiver::validate() const {
  require(l > 0, "fixed receiver l must be positive");
  require(c > 0, "fixed receiver c must be positive");
  require(r_load > 0, "fixed receiver r_load must be positive");
  require(m > 0, "fixed receiver m must be positive");
}

double close_switch_charge_share(double v_c1, double v_c2, double c_r1,
                                 double c_r2, double* loss_j) {
  const double merged = (c_r1 * v_c1 + c_r2 * v_c2) / (c_r1 + c_r2);
  if (loss_j != nullptr) {
    const double series_c = c_r1 * c_r2 / (c_r1 + c_r2);
    const double dv = v_c1 - v_c2;
    *loss_j += 0.5 * series_c * dv * dv;
  }
  return merged;
}

namespace {

// Series RLC half of the receiver: di/dt = (e - v_c - r*i)/l, dv_c/dt = i/c.
struct Rlc2 {
  double l, c, r;
  void deriv(double i, double v, double e, double& di, double& dv) const {
    di = (e - v - r * i) / l;
    dv = i / c;
  }
};

// One classical 4th-order step for the two-state series RLC.
void rk4_rlc2(const Rlc2& p, double& i, double& v, const EmfSamples& e,
              double dt) {
  double k1i, k1v, k2i, k2v, k3i, k3v, k4i, k4v;
  p.deriv(i, v, e.e0, k1i, k1v);
  p.deriv(i + 0.5 * dt * k1i, v + 0.5 * dt * k1v, e.e_mid, k2i, k2v);
  p.deriv(i + 0.5 * dt * k2i, v + 0.5 * dt * k2v, e.e_mid, k3i, k3v);
  p.deriv(i + dt * k3i, v + dt * k3v, e.e1, k4i, k4v);
  i += dt / 6.0 * (k1i + 2 * k2i + 2 * k3i + k4i);
  v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
}

// Closed switch with a resistive branch: C_R2 hangs off the C_R1 node
// through r_switch and the forward drop. Fourth state integrates the
// branch dissipation.
struct ClosedBranch {
  double l, c1, c2, r, rs, vd;

  double branch_current(double v1, double v2) const {
    const double dv = v1 - v2;
    if (dv > vd) return (dv - vd) / rs;
    if (dv < -vd) return (dv + vd) / rs;
    return 0.0;
  }

  void deriv(double i, double v1, double v2, double e, double& di, double& dv1,
             double& dv2, double& dq) const {
    const double i2 = branch_current(v1, v2);
    di = (e - v1 - r * i) / l;
    dv1 = (i - i2) / c1;
    dv2 = i2 / c2;
    dq = i2 * i2 * rs + vd * std::fabs(i2);
  }
};

void rk4_branch(const ClosedBranch& p, double& i, double& v1, double& v2,
                const EmfSamples& e, double dt, double& loss_j) {
  double k[4][4];
  const double es[4] = {e.e0, e.e_mid, e.e_mid, e.e1};
  const double in_i[4] = {0, 0.5, 0.5, 1.0};
  double ci = i, cv1 = v1, cv2 = v2;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      const double h = in_i[s] * dt;
      ci = i + h * k[s - 1][0];
      cv1 = v1 + h * k[s - 1][1];
      cv2 = v2 + h * k[s - 1][2];
    }
    p.deriv(ci, cv1, cv2, es[s], k[s][0], k[s][1], k[s][2], k[s][3]);
  }
  i += dt / 6.0 * (k[0][0] + 2 * k[1][0] + 2 * k[2][0] + k[3][0]);
  v1 += dt / 6.0 * (k[0][1] + 2 * k[1][1] + 2 * k[2][1] + k[3][1]);
  v2 += dt / 6.0 * (k[0][2] + 2 * k[1][2] + 2 * k[2][2] + k[3][2]);
  loss_j += dt / 6.0 * (k[0][3] + 2 * k[1][3] + 2 * k[2][3] + k[3][3]);
}

}  // namespace

ReceiverState step_attacker_receiver(const ReceiverState& state,
                                     const EmfSamples& emf, bool switch_cmd,
                                     const SystemParams& params, double dt,
                                     double& loss_j) {
  ReceiverState next = state;
  next.switch_closed = switch_cmd;

  const bool branch_mode = params.r_switch > 0.0 || params.delta_v_d > 0.0;
  // A drop with no stated on-resistance still needs a conduction path.
  const double rs = params.r_switch > 0.0 ? params.r_switch : 1e-3;

  if (!switch_cmd) {
    Rlc2 p{params.l_r, params.c_r1, params.r_load};
    rk4_rlc2(p, next.i_r, next.v_c1, emf, dt);
    // v_c2 frozen while open
  } else if (branch_mode) {
    ClosedBranch p{params.l_r, params.c_r1,   params.c_r2,
                   params.r_load, rs, params.delta_v_d};
    rk4_branch(p, next.i_r, next.v_c1, next.v_c2, emf, dt, loss_j);
  } else {
    if (!state.switch_closed && state.v_c1 != state.v_c2) {
      const double merged = close_switch_charge_share(
          state.v_c1, state.v_c2, params.c_r1, params.c_r2, &loss_j);
      next.v_c1 = merged;
      next.v_c2 = merged;
    }
    Rlc2 p{params.l_r, params.c_r1 + params.c_r2, params.r_load};
    rk4_rlc2(p, next.i_r, next.v_c1, emf, dt);
    next.v_c2 = next.v_c1;
  }
  return next;
}

void step_fixed_receiver(double& i_r, double& v_c, const EmfSamples& emf,
                         const FixedReceiver& rx, double dt) {
  Rlc2 p{rx.l, rx.c, rx.r_load};
  rk4_rlc2(p, i_r, v_c, emf, dt);
}

void TransmitterWave::append_segment(double freq_hz, double t_start) {
  if (freq_hz <= 0) throw ConfigError("transmitter frequency must be positive");
  double phi0 = 0.0;
  if (!segments_.empty()) {
    const Segment& last = segments_.back();
    if (t_start < last.t0)
      throw ConfigError("transmitter segments must not move backwards in time");
    phi0 = last.phi0 + kTwoPi * last.freq * (t_start - last.t0);
  }
  segments_.push_back({t_start, freq_hz, phi0});
}

std::size_t TransmitterWave::segment_index(double t) const {
  if (segments_.empty()) return static_cast<std::size_t>(-1);
  // Queries cluster near the end during a run.
  std::size_t n = segments_.size();
  if (t >= segments_[n - 1].t0) return n - 1;
  std::size_t lo = 0, hi = n - 1;
  while (lo + 1 < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (segments_[mid].t0 <= t)
      lo = mid;
    else
      hi = mid;
  }
  return segments_[hi].t0 <= t ? hi : lo;
}

double TransmitterWave::phase(double t) const {
  if (segments_.empty()) return 0.0;
  const Segment& s = segments_[segment_index(t)];
  return s.phi0 + kTwoPi * s.freq * (t - s.t0);
}

double TransmitterWave::current_slope(double t) const {
  if (segments_.empty()) return 0.0;
  const Segment& s = segments_[segment_index(t)];
  return amplitude_ * kTwoPi * s.freq * std::cos(phase(t));
}

double TransmitterWave::active_freq(double t) const {
  if (segments_.empty()) return 0.0;
  return segments_[segment_index(t)].freq;
}

}  // namespace hoplock
