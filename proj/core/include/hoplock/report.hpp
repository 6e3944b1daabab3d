#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hoplock/design.hpp"
#include "hoplock/sim.hpp"

namespace hoplock {

struct Metrics;  // metrics.hpp

/// Trace CSV: one header row naming every column, one row per sample.
/// Doubles are written with 17 significant digits so a read-back trace
/// reproduces the in-memory values exactly.
void write_trace_csv(const Trace& trace, std::ostream& os);
Trace read_trace_csv(std::istream& is, const std::string& name = "trace");

/// Duty table CSV: freq_hz, t_on_s, t_off_s, origin.
void write_table_csv(const FrequencyTable& table, std::ostream& os);
FrequencyTable read_table_csv(std::istream& is,
                              const std::string& name = "table");

void write_metrics_csv(const Metrics& metrics,
                       const std::vector<std::string>& fixed_names,
                       std::ostream& os);

/// Schedule audit CSV: t_start_s, freq_hz.
void write_schedule_csv(const std::vector<HopRecord>& hops, std::ostream& os);

/// Static SVG line plot of the transmitter and receiver currents.
void write_current_plot_svg(const Trace& trace, std::ostream& os);
/// Controller-mode timeline with the active and estimated frequencies.
void write_controller_plot_svg(const Trace& trace, std::ostream& os);

/// Canonical float formatting shared by all report writers.
std::string format_double(double v);

}  // namespace hoplock
