#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hoplock/errors.hpp"
#include "hoplock/plant.hpp"

namespace hoplock {

/// Which receiver-side signal the controller senses.
enum class SenseMode { kCapacitorVoltage, kLoadVoltage };

/// Per-half-cycle switch timing. t_on + t_off == period / 2.
struct DutyTimes {
  double t_on = 0.0;
  double t_off = 0.0;
  double period = 0.0;
};

enum class EntryOrigin { kComputed, kCalibrated, kRefined };

struct FrequencyTableEntry {
  double freq_hz = 0.0;
  DutyTimes duty;
  EntryOrigin origin = EntryOrigin::kComputed;
  int hits = 0;
};

/// Target band for capacitor selection.
struct DesignBand {
  double f_l = 0.0;
  double f_h = 0.0;
  double t_filter = 0.0;
  SenseMode sense_mode = SenseMode::kCapacitorVoltage;

  void validate() const;
};

struct SelectionReport {
  double c_r1_max = 0.0;
  double c_r2_min = 0.0;
  bool c_r1_feasible = false;  ///< candidate c_r1 <= c_r1_max
  bool c_r2_feasible = false;  ///< candidate c_r2 >= c_r2_min
};

/// Switch on/off time that tunes the switched-capacitor pair to full
/// resonance at f_t. Throws OutOfBandError outside the achievable band.
DutyTimes ton_toff(double f_t, double l_r, double c_r1, double c_r2);

/// Equivalent capacitance synthesized by a given off time at f_t.
double equivalent_capacitance(double t_off, double f_t, double c_r1,
                              double c_r2);

/// Series capacitance that resonates l_r at f_t.
double ideal_capacitance(double f_t, double l_r);

/// Fractions of the receiver current carried by C_R1 and C_R2 while the
/// switch is closed (drop-free approximation). Sums to exactly 1.
std::pair<double, double> splitting_factors(double c_r1, double c_r2);

/// Frequencies between which the switched pair can synthesize full
/// resonance: [parallel resonance, C_R1-only resonance].
std::pair<double, double> achievable_band(double l_r, double c_r1,
                                          double c_r2);

/// Capacitor bounds for covering a band, with the filter-time restriction
/// applied in capacitor-voltage mode. Candidates are checked when given;
/// the C_R1 bound in capacitor-voltage mode needs a C_R2 candidate.
SelectionReport select_capacitors(const DesignBand& band, double l_r,
                                  std::optional<double> c_r1_candidate,
                                  std::optional<double> c_r2_candidate);

/// Sorted, deduplicated duty-cycle table.
class FrequencyTable {
 public:
  static constexpr double kDedupToleranceHz = 1.0;

  /// Inserts or replaces (within 1 Hz) an entry, keeping order by frequency.
  void put(FrequencyTableEntry entry);
  /// Entry closest to freq within radius; ties break toward the lower
  /// frequency. Returns nullptr when nothing qualifies.
  FrequencyTableEntry* nearest(double freq_hz, double radius_hz);
  const FrequencyTableEntry* nearest(double freq_hz, double radius_hz) const;

  const std::vector<FrequencyTableEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<FrequencyTableEntry> entries_;
};

/// One computed entry per distinct frequency, sorted.
FrequencyTable build_frequency_table(std::span<const double> freqs, double l_r,
                                     double c_r1, double c_r2);

/// Calibration drives a private single-frequency simulation with the
/// transmitter-phase tap enabled and trims t_on until the receiver current
/// leads the transmitter current by 90 degrees.
struct CalibrationSetup {
  SystemParams plant;
  SenseMode sense_mode = SenseMode::kLoadVoltage;
  double t_filter = 0.2e-6;
  double filter_stage_tau = 4e-6;
  double dt = 10e-9;
  int max_trims = 200;
  double phase_target_tol_deg = 0.5;
};

FrequencyTableEntry calibrate_entry(const FrequencyTableEntry& entry,
                                    const CalibrationSetup& setup);

}  // namespace hoplock
