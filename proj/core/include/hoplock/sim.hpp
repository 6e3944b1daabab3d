#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hoplock/encryptor.hpp"
#include "hoplock/errors.hpp"
#include "hoplock/plant.hpp"

namespace hoplock {

struct SimConfig {
  double dt = 10e-9;
  double duration = 0.0;
  std::uint64_t seed = 0;
  int record_decimation = 1;

  /// Rejects a dt with fewer than 100 steps per period of the highest
  /// scheduled frequency.
  void validate(double max_scheduled_freq) const;
};

enum class EdgeKind { kUpward, kDownward };

struct EdgeEvent {
  double t = 0.0;
  EdgeKind kind = EdgeKind::kUpward;
  int source = 0;
};

/// Streaming hysteresis comparator. An upward event fires once the
/// signal crosses +hysteresis after having been below -hysteresis, and
/// is timestamped at the linearly interpolated zero crossing so the
/// band width cannot bias the edge time; downward is symmetric.
class HysteresisComparator {
 public:
  std::optional<EdgeEvent> update(double t, double x, double hysteresis);
  void reset();

 private:
  bool have_prev_ = false;
  double prev_t_ = 0.0, prev_x_ = 0.0;
  bool armed_up_ = false, armed_down_ = false;
  double zero_t_up_ = 0.0, zero_t_down_ = 0.0;
  bool have_zero_up_ = false, have_zero_down_ = false;
};

/// Two cascaded first-order low-pass stages. With per-stage tau = T/2 the
/// low-frequency group delay is T, so a detection chain built on it can
/// compensate a known filter time while the harmonics are attenuated
/// instead of merely delayed.
class TwoPoleLowPass {
 public:
  explicit TwoPoleLowPass(double stage_tau = 0.0) : tau_(stage_tau) {}

  double update(double t, double x);
  void reset();

 private:
  double tau_;
  double y1_ = 0.0, y2_ = 0.0;
  double last_t_ = 0.0;
  bool have_last_ = false;
  double cached_dt_ = -1.0, cached_a_ = 0.0;
};

/// Batch zero-crossing detection over a uniformly sampled window.
std::vector<EdgeEvent> detect_zero_cross(std::span<const double> samples,
                                         double t0, double dt,
                                         double hysteresis);

enum class CtrlMode : std::uint8_t { kSense = 0, kEstimate = 1, kEngage = 2 };

/// Signals a controller may observe at one step. The transmitter-phase
/// tap is an oracle for calibration runs only; the run loop invalidates
/// it unless the controller declares the need.
struct Observation {
  double t = 0.0;
  double v_c1 = 0.0;
  double v_load = 0.0;
  bool oracle_valid = false;
  double tx_phase = 0.0;
  double i_t = 0.0;
};

class ControllerBase {
 public:
  virtual ~ControllerBase() = default;
  /// Called once per step; the returned switch command takes effect at
  /// the following step boundary.
  virtual bool step(const Observation& obs) = 0;
  virtual CtrlMode mode() const = 0;
  virtual double freq_estimate() const = 0;
  virtual double active_t_on() const = 0;
  virtual bool wants_oracle() const { return false; }
  /// A run may end early once the controller reports it has finished
  /// (calibration convergence); attack controllers never do.
  virtual bool finished() const { return false; }
};

/// Uniformly sampled record of a run, stored column-wise. Receiver 0 is
/// the attacker when present.
struct Trace {
  double sample_dt = 0.0;
  std::vector<std::string> rx_names;
  std::vector<double> t, i_t, f_t;
  struct RxColumns {
    std::vector<double> i_r, v_c1, v_c2, v_load;
    std::vector<std::uint8_t> switch_closed;
  };
  std::vector<RxColumns> rx;
  std::vector<std::uint8_t> controller_mode;
  std::vector<double> f_estimate, t_on, switch_loss_j;

  std::size_t size() const { return t.size(); }
  bool has_attacker() const {
    return !rx_names.empty() && rx_names.front() == "atk";
  }
  std::vector<std::string> column_names() const;
};

struct RunInputs {
  SystemParams attacker;
  bool attacker_present = true;
  std::vector<FixedReceiver> fixed;
  std::vector<std::string> fixed_names;
  HopSchedule schedule;
  DefenseConfig defense;
  SimConfig sim;
};

struct HopRecord {
  double t = 0.0;
  double freq_hz = 0.0;
  double dwell_s = 0.0;
  bool forced_by_defense = false;
};

struct RunResult {
  Trace trace;
  std::vector<HopRecord> hops;
  std::vector<std::string> events;
};

/// Fixed-step lockstep advance of the plant and the controller.
/// Deterministic: identical inputs and seed give a bit-identical Trace.
RunResult run(const RunInputs& inputs, ControllerBase* controller);

}  // namespace hoplock
