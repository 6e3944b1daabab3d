#include "hoplock/design.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hoplock {

void DesignBand::validate() const {
  if (!(f_l > 0) || !(f_h > f_l))
    throw ConfigError("design band requires 0 < f_l < f_h");
  if (t_filter < 0) throw ConfigError("t_filter must be non-negative");
}

std::pair<double, double> achievable_band(double l_r, double c_r1,
                                          double c_r2) {
  const double f_low = 1.0 / (kTwoPi * std::sqrt(l_r * (c_r1 + c_r2)));
  const double f_high = 1.0 / (kTwoPi * std::sqrt(l_r * c_r1));
  return {f_low, f_high};
}

DutyTimes ton_toff(double f_t, double l_r, double c_r1, double c_r2) {
  if (!(f_t > 0) || !(l_r > 0) || !(c_r1 > 0) || !(c_r2 > 0))
    throw ConfigError("ton_toff requires positive inputs");
  const double w = kTwoPi * f_t;
  const double a =
      (c_r1 + c_r2) / c_r2 * (1.0 - w * w * l_r * c_r1);
  // Tiny excursions from floating-point cancellation at the band edges.
  const double slack = 1e-12;
  if (a < -slack || a > 1.0 + slack) {
    const auto [lo, hi] = achievable_band(l_r, c_r1, c_r2);
    std::ostringstream os;
    os << "frequency " << f_t << " Hz outside the achievable band ["
       << lo << ", " << hi << "] Hz";
    throw OutOfBandError(os.str(), lo, hi);
  }
  DutyTimes d;
  d.period = 1.0 / f_t;
  d.t_on = std::asin(std::clamp(a, 0.0, 1.0)) / (kPi * f_t);
  d.t_off = d.period / 2.0 - d.t_on;
  return d;
}

double equivalent_capacitance(double t_off, double f_t, double c_r1,
                              double c_r2) {
  const double half = 1.0 / (2.0 * f_t);
  if (t_off < 0 || t_off > half * (1 + 1e-12))
    throw ConfigError("t_off outside [0, T/2]");
  const double c = std::cos(kPi * f_t * t_off);
  return 1.0 / ((1.0 - c) / c_r1 + c / (c_r1 + c_r2));
}

double ideal_capacitance(double f_t, double l_r) {
  const double w = kTwoPi * f_t;
  return 1.0 / (w * w * l_r);
}

std::pair<double, double> splitting_factors(double c_r1, double c_r2) {
  const double k1 = c_r1 / (c_r1 + c_r2);
  return {k1, 1.0 - k1};
}

SelectionReport select_capacitors(const DesignBand& band, double l_r,
                                  std::optional<double> c_r1_candidate,
                                  std::optional<double> c_r2_candidate) {
  band.validate();
  if (!(l_r > 0)) throw ConfigError("l_r must be positive");
  const double wl2 = kTwoPi * band.f_l;
  const double wh2 = kTwoPi * band.f_h;
  SelectionReport rep;
  if (band.sense_mode == SenseMode::kLoadVoltage || band.t_filter == 0.0) {
    rep.c_r1_max = 1.0 / (wh2 * wh2 * l_r);
    const double c1 = c_r1_candidate.value_or(rep.c_r1_max);
    rep.c_r2_min = 1.0 / (wl2 * wl2 * l_r) - c1;
  } else {
    rep.c_r2_min = 1.0 / (wl2 * wl2 * l_r);
    if (!c_r2_candidate)
      throw ConfigError(
          "capacitor-voltage mode needs a c_r2 candidate for the C_R1 bound");
    const double s = std::sin(kPi * band.f_h * band.t_filter);
    const double denom = wh2 * wh2 * l_r - s / *c_r2_candidate;
    if (denom <= 0)
      throw ConfigError(
          "infeasible band: filter time too long for the requested f_h");
    rep.c_r1_max = (1.0 - s) / denom;
  }
  rep.c_r1_feasible =
      c_r1_candidate && *c_r1_candidate > 0 && *c_r1_candidate <= rep.c_r1_max;
  rep.c_r2_feasible = c_r2_candidate && *c_r2_candidate >= rep.c_r2_min;
  return rep;
}

void FrequencyTable::put(FrequencyTableEntry entry) {
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), entry.freq_hz,
      [](const FrequencyTableEntry& e, double f) { return e.freq_hz < f; });
  if (it != entries_.end() &&
      std::fabs(it->freq_hz - entry.freq_hz) <= kDedupToleranceHz) {
    *it = entry;
    return;
  }
  if (it != entries_.begin() &&
      std::fabs(std::prev(it)->freq_hz - entry.freq_hz) <= kDedupToleranceHz) {
    *std::prev(it) = entry;
    return;
  }
  entries_.insert(it, entry);
}

FrequencyTableEntry* FrequencyTable::nearest(double freq_hz,
                                             double radius_hz) {
  const FrequencyTableEntry* e =
      static_cast<const FrequencyTable*>(this)->nearest(freq_hz, radius_hz);
  return const_cast<FrequencyTableEntry*>(e);
}

const FrequencyTableEntry* FrequencyTable::nearest(double freq_hz,
                                                   double radius_hz) const {
  const FrequencyTableEntry* best = nullptr;
  double best_d = radius_hz;
  for (const auto& e : entries_) {
    const double d = std::fabs(e.freq_hz - freq_hz);
    // Entries are sorted ascending, so on a tie the lower frequency wins
    // by keeping the first of the two.
    if (d < best_d || (best == nullptr && d <= best_d)) {
      best = &e;
      best_d = d;
    }
  }
  return best;
}

FrequencyTable build_frequency_table(std::span<const double> freqs, double l_r,
                                     double c_r1, double c_r2) {
  FrequencyTable table;
  for (double f : freqs) {
    FrequencyTableEntry e;
    e.freq_hz = f;
    e.duty = ton_toff(f, l_r, c_r1, c_r2);
    e.origin = EntryOrigin::kComputed;
    table.put(e);
  }
  return table;
}

}  // namespace hoplock
