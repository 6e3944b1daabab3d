#include "hoplock/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "hoplock/metrics.hpp"

namespace hoplock {

std::string format_double(double v) {
  char buf[40];
  if (std::isnan(v)) return "nan";
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& name, int lineno) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    if (s == "nan") return std::nan("");
    throw ParseError(name + ":" + std::to_string(lineno) +
                     ": bad number '" + s + "'");
  }
}

const char* origin_name(EntryOrigin o) {
  switch (o) {
    case EntryOrigin::kComputed: return "computed";
    case EntryOrigin::kCalibrated: return "calibrated";
    case EntryOrigin::kRefined: return "refined";
  }
  return "computed";
}

EntryOrigin origin_from(const std::string& s, const std::string& name,
                        int lineno) {
  if (s == "computed") return EntryOrigin::kComputed;
  if (s == "calibrated") return EntryOrigin::kCalibrated;
  if (s == "refined") return EntryOrigin::kRefined;
  throw ParseError(name + ":" + std::to_string(lineno) + ": bad origin '" +
                   s + "'");
}

}  // namespace

void write_trace_csv(const Trace& trace, std::ostream& os) {
  const auto cols = trace.column_names();
  for (std::size_t c = 0; c < cols.size(); ++c)
    os << (c ? "," : "") << cols[c];
  os << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << format_double(trace.t[i]) << ',' << format_double(trace.i_t[i])
       << ',' << format_double(trace.f_t[i]);
    for (const auto& rx : trace.rx) {
      os << ',' << format_double(rx.i_r[i]) << ','
         << format_double(rx.v_c1[i]) << ',' << format_double(rx.v_c2[i])
         << ',' << format_double(rx.v_load[i]) << ','
         << int(rx.switch_closed[i]);
    }
    os << ',' << int(trace.controller_mode[i]) << ','
       << format_double(trace.f_estimate[i]) << ','
       << format_double(trace.t_on[i]) << ','
       << format_double(trace.switch_loss_j[i]) << '\n';
  }
}

Trace read_trace_csv(std::istream& is, const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 7 || header[0] != "t_s" || header[1] != "i_t_a" ||
      header[2] != "f_t_hz")
    throw ParseError(name + ":1: not a trace header");

  Trace trace;
  std::size_t c = 3;
  const std::string suffix = "_i_r_a";
  while (c + 4 < header.size() && header[c].size() > suffix.size() &&
         header[c].compare(header[c].size() - suffix.size(), suffix.size(),
                           suffix) == 0) {
    trace.rx_names.push_back(
        header[c].substr(0, header[c].size() - suffix.size()));
    trace.rx.emplace_back();
    c += 5;
  }
  if (c + 4 != header.size() || header[c] != "controller_mode")
    throw ParseError(name + ":1: unexpected trace columns");

  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw ParseError(name + ":" + std::to_string(lineno) +
                       ": wrong field count");
    std::size_t k = 0;
    trace.t.push_back(to_double(f[k++], name, lineno));
    trace.i_t.push_back(to_double(f[k++], name, lineno));
    trace.f_t.push_back(to_double(f[k++], name, lineno));
    for (auto& rx : trace.rx) {
      rx.i_r.push_back(to_double(f[k++], name, lineno));
      rx.v_c1.push_back(to_double(f[k++], name, lineno));
      rx.v_c2.push_back(to_double(f[k++], name, lineno));
      rx.v_load.push_back(to_double(f[k++], name, lineno));
      rx.switch_closed.push_back(
          static_cast<std::uint8_t>(to_double(f[k++], name, lineno) != 0));
    }
    trace.controller_mode.push_back(
        static_cast<std::uint8_t>(to_double(f[k++], name, lineno)));
    trace.f_estimate.push_back(to_double(f[k++], name, lineno));
    trace.t_on.push_back(to_double(f[k++], name, lineno));
    trace.switch_loss_j.push_back(to_double(f[k++], name, lineno));
  }
  if (trace.size() >= 2) trace.sample_dt = trace.t[1] - trace.t[0];
  return trace;
}

void write_table_csv(const FrequencyTable& table, std::ostream& os) {
  os << "freq_hz,t_on_s,t_off_s,origin\n";
  for (const auto& e : table.entries())
    os << format_double(e.freq_hz) << ',' << format_double(e.duty.t_on) << ','
       << format_double(e.duty.t_off) << ',' << origin_name(e.origin) << '\n';
}

FrequencyTable read_table_csv(std::istream& is, const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "freq_hz,t_on_s,t_off_s,origin")
    throw ParseError(name + ":1: not a duty-table header");
  FrequencyTable table;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4)
      throw ParseError(name + ":" + std::to_string(lineno) +
                       ": expected 4 fields");
    FrequencyTableEntry e;
    e.freq_hz = to_double(f[0], name, lineno);
    e.duty.t_on = to_double(f[1], name, lineno);
    e.duty.t_off = to_double(f[2], name, lineno);
    e.duty.period = 2.0 * (e.duty.t_on + e.duty.t_off);
    e.origin = origin_from(f[3], name, lineno);
    if (!(e.freq_hz > 0) || e.duty.t_on < 0 || e.duty.t_off < 0)
      throw ParseError(name + ":" + std::to_string(lineno) +
                       ": non-physical entry");
    table.put(e);
  }
  return table;
}

void write_metrics_csv(const Metrics& metrics,
                       const std::vector<std::string>& fixed_names,
                       std::ostream& os) {
  os << "hop,t_start_s,t_end_s,freq_hz,locked,lock_time_s,lock_cycles,"
        "attacker_power_w";
  for (const auto& n : fixed_names) os << ',' << n << "_power_w";
  os << ",matched_power_w,stolen_ratio,phase_error_deg,switching_loss_w\n";
  for (const auto& h : metrics.hops) {
    os << h.index << ',' << format_double(h.t_start) << ','
       << format_double(h.t_end) << ',' << format_double(h.freq_hz) << ','
       << (h.lock.locked ? 1 : 0) << ',' << format_double(h.lock.seconds)
       << ',' << format_double(h.lock.cycles) << ','
       << format_double(h.attacker_power_w);
    for (std::size_t k = 0; k < fixed_names.size(); ++k)
      os << ','
         << format_double(k < h.fixed_power_w.size() ? h.fixed_power_w[k]
                                                     : 0.0);
    os << ',' << format_double(h.matched_power_w) << ','
       << format_double(h.stolen_ratio) << ','
       << format_double(h.phase_error_deg) << ','
       << format_double(h.switching_loss_w) << '\n';
  }
}

void write_schedule_csv(const std::vector<HopRecord>& hops, std::ostream& os) {
  os << "t_start_s,freq_hz,dwell_s,forced_by_defense\n";
  for (const auto& h : hops)
    os << format_double(h.t) << ',' << format_double(h.freq_hz) << ','
       << format_double(h.dwell_s) << ',' << (h.forced_by_defense ? 1 : 0)
       << '\n';
}

namespace {

constexpr int kW = 1000, kH = 420, kMargin = 50;

struct Axis {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double px(double v, double span_px, double off_px) const {
    const double d = hi - lo;
    return off_px + (d > 0 ? (v - lo) / d : 0.5) * span_px;
  }
};

void polyline(std::ostream& os, const std::vector<double>& t,
              const std::vector<double>& y, const Axis& ax, const Axis& ay,
              const char* color) {
  // keep the file small; long runs get decimated
  const std::size_t stride = std::max<std::size_t>(1, t.size() / 4000);
  os << "<polyline fill=\"none\" stroke=\"" << color
     << "\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < t.size(); i += stride) {
    const double x = ax.px(t[i], kW - 2 * kMargin, kMargin);
    const double yy = kH - ay.px(y[i], kH - 2 * kMargin, kMargin);
    os << int(x * 10) / 10.0 << ',' << int(yy * 10) / 10.0 << ' ';
  }
  os << "\"/>\n";
}

void svg_open(std::ostream& os, const char* title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kMargin << "\" y=\"24\" font-family=\"monospace\" "
        "font-size=\"14\">"
     << title << "</text>\n";
}

void legend(std::ostream& os, int slot, const char* color, const char* label) {
  const int x = kMargin + 160 * slot;
  os << "<rect x=\"" << x << "\" y=\"" << kH - 20 << "\" width=\"12\" "
     << "height=\"12\" fill=\"" << color << "\"/><text x=\"" << x + 18
     << "\" y=\"" << kH - 9
     << "\" font-family=\"monospace\" font-size=\"12\">" << label
     << "</text>\n";
}

}  // namespace

void write_current_plot_svg(const Trace& trace, std::ostream& os) {
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c",
                                  "#9467bd", "#8c564b"};
  Axis ax, ay;
  ax.lo = trace.t.empty() ? 0.0 : trace.t.front();
  ax.hi = trace.t.empty() ? 1.0 : trace.t.back();
  for (double v : trace.i_t) ay.include(v);
  for (const auto& rx : trace.rx)
    for (double v : rx.i_r) ay.include(v);
  svg_open(os, "currents [A] vs time [s]");
  polyline(os, trace.t, trace.i_t, ax, ay, "#999999");
  legend(os, 0, "#999999", "i_t");
  for (std::size_t r = 0; r < trace.rx.size(); ++r) {
    const char* color = kColors[r % 5];
    polyline(os, trace.t, trace.rx[r].i_r, ax, ay, color);
    legend(os, int(r) + 1, color,
           r < trace.rx_names.size() ? trace.rx_names[r].c_str() : "rx");
  }
  os << "</svg>\n";
}

void write_controller_plot_svg(const Trace& trace, std::ostream& os) {
  Axis ax, af, am;
  ax.lo = trace.t.empty() ? 0.0 : trace.t.front();
  ax.hi = trace.t.empty() ? 1.0 : trace.t.back();
  for (double v : trace.f_t) af.include(v);
  for (double v : trace.f_estimate) af.include(v);
  am.lo = 0.0;
  am.hi = 2.5;
  svg_open(os, "controller mode and frequency tracking");
  std::vector<double> mode(trace.controller_mode.begin(),
                           trace.controller_mode.end());
  polyline(os, trace.t, mode, ax, am, "#ff7f0e");
  polyline(os, trace.t, trace.f_t, ax, af, "#999999");
  polyline(os, trace.t, trace.f_estimate, ax, af, "#1f77b4");
  legend(os, 0, "#ff7f0e", "mode");
  legend(os, 1, "#999999", "f_t");
  legend(os, 2, "#1f77b4", "f_est");
  os << "</svg>\n";
}

}  // namespace hoplock
