#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "hoplock/errors.hpp"

namespace hoplock {

struct HopEntry {
  double freq_hz = 0.0;
  double dwell_s = 0.0;
};

/// Seeded random hop source: uniform over freq_set excluding the previous
/// frequency, dwell uniform in [dwell_min, dwell_max].
struct HopGeneratorSpec {
  std::vector<double> freq_set;
  double dwell_min = 0.5e-3;
  double dwell_max = 2e-3;

  void validate() const;
};

/// The "key": either an explicit hop list or a generator spec.
struct HopSchedule {
  std::vector<HopEntry> entries;
  std::optional<HopGeneratorSpec> generator;

  bool empty() const { return entries.empty() && !generator; }
  double max_freq() const;
  void validate() const;
};

/// Deterministic hop sequencer used by the run loop. Explicit entries play
/// in order and the last frequency holds afterwards; a generator never
/// runs out. next() after exhaustion returns nullopt.
class HopSequencer {
 public:
  HopSequencer(const HopSchedule& schedule, std::uint64_t seed);

  std::optional<HopEntry> next();

 private:
  double uniform01();

  const HopSchedule& schedule_;
  std::size_t index_ = 0;
  std::mt19937_64 rng_;
  double prev_freq_ = -1.0;
};

struct DefenseConfig {
  bool enabled = false;
  double mismatch_threshold = 0.2;  ///< fraction of transmitted power
  double reaction_delay = 100e-6;   ///< seconds of sustained mismatch

  void validate() const;
};

/// Transmitter-side monitor comparing transmitted power against the sum of
/// authorized receiver powers over a one-period sliding mean. Reports a hop
/// request after the mismatch exceeds the threshold continuously for
/// reaction_delay.
class DefenseMonitor {
 public:
  explicit DefenseMonitor(const DefenseConfig& config) : config_(config) {}

  /// Feed one sample of instantaneous powers; returns true when the
  /// transmitter should abandon the current frequency now.
  bool update(double t, double dt, double p_tx, double p_auth,
              double active_freq);

  void reset();

 private:
  struct Sample {
    double t, p_tx, p_auth;
  };
  DefenseConfig config_;
  std::vector<Sample> window_;  // ring via erase-from-front on a deque-like use
  std::size_t head_ = 0;
  double sum_tx_ = 0.0, sum_auth_ = 0.0;
  double mismatch_since_ = -1.0;
};

}  // namespace hoplock
