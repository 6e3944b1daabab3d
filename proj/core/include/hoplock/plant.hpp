#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hoplock/errors.hpp"

namespace hoplock {

inline constexpr double kTwoPi = 6.28318530717958647692528676656;
inline constexpr double kPi = 3.14159265358979323846264338328;

/// Electrical constants of the transmitter and the switched-capacitor
/// intruder receiver.
struct SystemParams {
  double l_t = 45e-6;           ///< transmitter coil inductance (H)
  double l_r = 38e-6;           ///< receiver coil inductance (H)
  double m_r = 9e-6;            ///< mutual inductance (H)
  double c_r1 = 22e-9;          ///< base compensation capacitance (F)
  double c_r2 = 147e-9;         ///< switched compensation capacitance (F)
  double r_load = 5.0;          ///< load resistance (Ohm)
  double i_t_amplitude = 4.0;   ///< transmitter current amplitude (A)
  double delta_v_d = 0.0;       ///< switch forward drop (V)
  double r_switch = 0.0;        ///< switch on-resistance (Ohm)

  void validate() const;
};

/// Authorized receiver with a fixed series compensation capacitor.
struct FixedReceiver {
  double l = 38e-6;     ///< coil inductance (H)
  double c = 157.8e-9;  ///< series capacitance (F)
  double r_load = 5.0;  ///< load resistance (Ohm)
  double m = 9e-6;      ///< mutual inductance to the transmitter (H)

  double resonant_freq() const { return 1.0 / (kTwoPi * std::sqrt(l * c)); }
  void validate() const;
};

/// Instantaneous state of a receiver branch. For fixed receivers only
/// i_r and v_c1 are meaningful.
struct ReceiverState {
  double i_r = 0.0;    ///< coil current (A)
  double v_c1 = 0.0;   ///< voltage across C_R1 (V)
  double v_c2 = 0.0;   ///< voltage across C_R2 (V); frozen while the switch is open
  bool switch_closed = false;

  bool finite() const {
    return std::isfinite(i_r) && std::isfinite(v_c1) && std::isfinite(v_c2);
  }
};

/// Induced EMF sampled at the start, midpoint, and end of one step.
struct EmfSamples {
  double e0 = 0.0;
  double e_mid = 0.0;
  double e1 = 0.0;
};

/// Instantaneous charge redistribution when the switch closes with
/// unequal capacitor voltages (r_switch = 0 mode). Returns the merged
/// voltage; the dissipated energy is added to *loss_j when given.
double close_switch_charge_share(double v_c1, double v_c2, double c_r1,
                                 double c_r2, double* loss_j = nullptr);

/// Advances the intruder receiver by one step with the switch topology
/// held constant. A closed command with unequal capacitor voltages first
/// performs the charge-share merge (r_switch = 0) or conducts through the
/// resistive branch (r_switch > 0). Switching losses accumulate in loss_j.
ReceiverState step_attacker_receiver(const ReceiverState& state,
                                     const EmfSamples& emf, bool switch_cmd,
                                     const SystemParams& params, double dt,
                                     double& loss_j);

/// Advances a fixed-compensation receiver by one step.
void step_fixed_receiver(double& i_r, double& v_c, const EmfSamples& emf,
                         const FixedReceiver& rx, double dt);

/// Piecewise-constant-frequency sine with phase accumulated across hops,
/// so the transmitter current is continuous at every hop instant.
/// Segments are append-only; the last one extends indefinitely.
class TransmitterWave {
 public:
  explicit TransmitterWave(double amplitude) : amplitude_(amplitude) {}

  /// Starts a new segment at t_start. Earlier segments keep their data;
  /// t_start must not decrease.
  void append_segment(double freq_hz, double t_start);

  double amplitude() const { return amplitude_; }
  double phase(double t) const;
  double current(double t) const { return amplitude_ * std::sin(phase(t)); }
  /// d(i_t)/dt, exact within a segment.
  double current_slope(double t) const;
  double active_freq(double t) const;
  /// EMF induced in a receiver coupled with mutual inductance m.
  double emf(double m, double t) const { return m * current_slope(t); }

 private:
  struct Segment {
    double t0;
    double freq;
    double phi0;
  };
  std::size_t segment_index(double t) const;

  double amplitude_;
  std::vector<Segment> segments_;
};

}  // namespace hoplock
