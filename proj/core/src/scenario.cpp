#include "hoplock/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hoplock/report.hpp"

namespace hoplock {

namespace {

struct Line {
  int number;
  std::string section;
  std::string key;
  std::string value;
};

[[noreturn]] void fail(const std::string& name, int line,
                       const std::string& msg) {
  std::ostringstream os;
  os << name << ":" << line << ": " << msg;
  throw ParseError(os.str());
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double prefix_scale(const std::string& p, bool& ok) {
  ok = true;
  if (p.empty()) return 1.0;
  if (p == "p") return 1e-12;
  if (p == "n") return 1e-9;
  if (p == "u" || p == "\xc2\xb5") return 1e-6;
  if (p == "m") return 1e-3;
  if (p == "k") return 1e3;
  if (p == "M") return 1e6;
  if (p == "G") return 1e9;
  ok = false;
  return 1.0;
}

// Accepts "22nF", "0.75us", "65kHz", "5Ohm", bare numbers. The unit word,
// when present, must match the expected one.
double parse_unit_value(const std::string& raw, const std::string& unit,
                        const std::string& name, int line) {
  const std::string v = trim(raw);
  std::size_t split = v.size();
  while (split > 0) {
    const unsigned char c = v[split - 1];
    if (std::isalpha(c) || c >= 0x80)
      --split;
    else
      break;
  }
  const std::string num = trim(v.substr(0, split));
  std::string suffix = v.substr(split);

  double x = 0.0;
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), x);
  if (ec != std::errc() || ptr != num.data() + num.size())
    fail(name, line, "cannot parse number '" + v + "'");
  if (!std::isfinite(x)) fail(name, line, "non-finite number '" + v + "'");

  if (suffix.empty()) return x;
  std::string prefix;
  if (!unit.empty() && suffix.size() >= unit.size() &&
      suffix.compare(suffix.size() - unit.size(), unit.size(), unit) == 0) {
    prefix = suffix.substr(0, suffix.size() - unit.size());
  } else if (unit.empty()) {
    prefix = suffix;
  } else {
    fail(name, line,
         "unit mismatch for '" + v + "' (expected " + unit + ")");
  }
  bool ok = false;
  const double scale = prefix_scale(prefix, ok);
  if (!ok)
    fail(name, line, "unknown unit prefix '" + prefix + "' in '" + v + "'");
  return x * scale;
}

bool parse_bool(const std::string& raw, const std::string& name, int line) {
  const std::string v = trim(raw);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  fail(name, line, "cannot parse boolean '" + v + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

SenseMode parse_sense_mode(const std::string& raw, const std::string& name,
                           int line) {
  const std::string v = trim(raw);
  if (v == "capacitor-voltage" || v == "cap") return SenseMode::kCapacitorVoltage;
  if (v == "load-voltage" || v == "load") return SenseMode::kLoadVoltage;
  fail(name, line, "sense_mode must be capacitor-voltage or load-voltage");
}

}  // namespace

Scenario parse_scenario_text(std::string_view text, const std::string& name) {
  std::vector<Line> lines;
  {
    std::string section;
    int n = 0;
    std::istringstream is{std::string(text)};
    std::string raw;
    while (std::getline(is, raw)) {
      ++n;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string s = trim(raw);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(name, n, "malformed section header");
        section = trim(s.substr(1, s.size() - 2));
        if (section == "fixed_receiver")
          lines.push_back({n, section, "__begin__", ""});
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(name, n, "expected 'key = value'");
      if (section.empty()) fail(name, n, "key outside any section");
      lines.push_back({n, section, trim(s.substr(0, eq)), trim(s.substr(eq + 1))});
    }
  }

  Scenario sc;
  bool have_duration = false;
  bool have_schedule = false;
  std::vector<HopEntry> pattern;
  int repeat = 1;
  HopGeneratorSpec gen;
  bool have_generator = false;
  FixedReceiverSpec* fx = nullptr;
  std::map<std::string, double> fx_resonant_at;

  for (const auto& ln : lines) {
    const auto num = [&](const std::string& unit) {
      return parse_unit_value(ln.value, unit, name, ln.number);
    };
    const auto positive = [&](const std::string& unit, const char* what) {
      const double x = num(unit);
      if (!(x > 0))
        fail(name, ln.number, std::string(what) + " must be positive");
      return x;
    };

    if (ln.section == "sim") {
      if (ln.key == "dt") sc.sim.dt = positive("s", "dt");
      else if (ln.key == "duration") { sc.sim.duration = positive("s", "duration"); have_duration = true; }
      else if (ln.key == "seed") sc.sim.seed = static_cast<std::uint64_t>(num(""));
      else if (ln.key == "record_decimation") {
        sc.sim.record_decimation = static_cast<int>(num(""));
        if (sc.sim.record_decimation < 1)
          fail(name, ln.number, "record_decimation must be >= 1");
      }
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [sim]");
    } else if (ln.section == "transmitter") {
      if (ln.key == "i_t_amplitude") sc.attacker.i_t_amplitude = positive("A", "i_t_amplitude");
      else if (ln.key == "l_t") sc.attacker.l_t = positive("H", "l_t");
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [transmitter]");
    } else if (ln.section == "attacker") {
      if (ln.key == "enabled") sc.attacker_present = parse_bool(ln.value, name, ln.number);
      else if (ln.key == "l_r") sc.attacker.l_r = positive("H", "l_r");
      else if (ln.key == "m_r") sc.attacker.m_r = positive("H", "m_r");
      else if (ln.key == "c_r1") sc.attacker.c_r1 = positive("F", "c_r1");
      else if (ln.key == "c_r2") sc.attacker.c_r2 = positive("F", "c_r2");
      else if (ln.key == "r_load") sc.attacker.r_load = positive("Ohm", "r_load");
      else if (ln.key == "r_switch") sc.attacker.r_switch = num("Ohm");
      else if (ln.key == "delta_v_d") sc.attacker.delta_v_d = num("V");
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [attacker]");
    } else if (ln.section == "controller") {
      auto& cc = sc.controller;
      if (ln.key == "enabled") sc.controller_enabled = parse_bool(ln.value, name, ln.number);
      else if (ln.key == "sense_mode") cc.sense_mode = parse_sense_mode(ln.value, name, ln.number);
      else if (ln.key == "t_filter") cc.t_filter = num("s");
      else if (ln.key == "filter_tau") cc.filter_stage_tau = num("s");
      else if (ln.key == "estimation_window") cc.estimation_window = positive("s", "estimation_window");
      else if (ln.key == "adopt_radius") cc.adopt_radius_hz = positive("Hz", "adopt_radius");
      else if (ln.key == "phase_tolerance") cc.phase_tolerance_deg = positive("", "phase_tolerance");
      else if (ln.key == "trim_gain") cc.trim_gain = positive("", "trim_gain");
      else if (ln.key == "distortion_rel_tol") cc.distortion_rel_tol = positive("", "distortion_rel_tol");
      else if (ln.key == "distortion_count") cc.distortion_count = static_cast<int>(num(""));
      else if (ln.key == "regulation") cc.regulation_enabled = parse_bool(ln.value, name, ln.number);
      else if (ln.key == "hysteresis_frac") cc.hysteresis_frac = positive("", "hysteresis_frac");
      else if (ln.key == "table") sc.table_file = ln.value;
      else if (ln.key == "calibrate") sc.calibrate = parse_bool(ln.value, name, ln.number);
      else if (ln.key == "table_freqs") {
        for (const auto& item : split_list(ln.value))
          sc.table_freqs.push_back(
              parse_unit_value(item, "Hz", name, ln.number));
      }
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [controller]");
    } else if (ln.section == "schedule") {
      have_schedule = true;
      if (ln.key == "hops") {
        for (const auto& item : split_list(ln.value)) {
          const auto colon = item.find(':');
          if (colon == std::string::npos)
            fail(name, ln.number, "hops entries must look like 65kHz:1ms");
          HopEntry e;
          e.freq_hz = parse_unit_value(item.substr(0, colon), "Hz", name, ln.number);
          e.dwell_s = parse_unit_value(item.substr(colon + 1), "s", name, ln.number);
          pattern.push_back(e);
        }
      }
      else if (ln.key == "repeat") {
        repeat = static_cast<int>(num(""));
        if (repeat < 1) fail(name, ln.number, "repeat must be >= 1");
      }
      else if (ln.key == "freq_set") {
        for (const auto& item : split_list(ln.value))
          gen.freq_set.push_back(parse_unit_value(item, "Hz", name, ln.number));
        have_generator = true;
      }
      else if (ln.key == "dwell_min") { gen.dwell_min = positive("s", "dwell_min"); have_generator = true; }
      else if (ln.key == "dwell_max") { gen.dwell_max = positive("s", "dwell_max"); have_generator = true; }
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [schedule]");
    } else if (ln.section == "defense") {
      if (ln.key == "enabled") sc.defense.enabled = parse_bool(ln.value, name, ln.number);
      else if (ln.key == "mismatch_threshold") sc.defense.mismatch_threshold = num("");
      else if (ln.key == "reaction_delay") sc.defense.reaction_delay = num("s");
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [defense]");
    } else if (ln.section == "fixed_receiver") {
      if (ln.key == "__begin__") {
        sc.fixed.emplace_back();
        fx = &sc.fixed.back();
        fx->name = "fx" + std::to_string(sc.fixed.size());
        continue;
      }
      if (fx == nullptr) fail(name, ln.number, "key outside a [fixed_receiver] section");
      if (ln.key == "name") fx->name = ln.value;
      else if (ln.key == "l") fx->rx.l = positive("H", "l");
      else if (ln.key == "c") fx->rx.c = positive("F", "c");
      else if (ln.key == "resonant_at") fx_resonant_at[fx->name] = positive("Hz", "resonant_at");
      else if (ln.key == "r_load") fx->rx.r_load = positive("Ohm", "r_load");
      else if (ln.key == "m") fx->rx.m = positive("H", "m");
      else fail(name, ln.number, "unknown key '" + ln.key + "' in [fixed_receiver]");
    } else {
      fail(name, ln.number, "unknown section [" + ln.section + "]");
    }
  }

  if (!have_duration) throw ParseError(name + ": missing required key sim.duration");
  if (!have_schedule) throw ParseError(name + ": missing [schedule] section");

  for (int r = 0; r < repeat; ++r)
    for (const auto& e : pattern) sc.schedule.entries.push_back(e);
  if (have_generator) {
    gen.validate();
    sc.schedule.generator = gen;
  }
  if (sc.schedule.empty())
    throw ParseError(name + ": schedule defines neither hops nor a generator");

  for (auto& spec : sc.fixed) {
    auto it = fx_resonant_at.find(spec.name);
    if (it != fx_resonant_at.end()) {
      const double w = kTwoPi * it->second;
      spec.rx.c = 1.0 / (w * w * spec.rx.l);
    }
    spec.rx.validate();
  }
  if (sc.attacker_present) sc.attacker.validate();
  sc.defense.validate();
  sc.schedule.validate();
  sc.sim.validate(sc.schedule.max_freq());
  if (sc.attacker_present && sc.controller_enabled) {
    double f_l = sc.schedule.max_freq();
    for (const auto& e : sc.schedule.entries) f_l = std::min(f_l, e.freq_hz);
    if (sc.schedule.generator)
      for (double f : sc.schedule.generator->freq_set) f_l = std::min(f_l, f);
    sc.controller.validate(f_l);
  }
  return sc;
}

Scenario parse_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

std::vector<std::string> Scenario::band_warnings() const {
  std::vector<std::string> out;
  if (!attacker_present) return out;
  const auto [lo, hi] =
      achievable_band(attacker.l_r, attacker.c_r1, attacker.c_r2);
  auto check = [&](double f) {
    if (f < lo || f > hi) {
      std::ostringstream os;
      os << "scheduled frequency " << f << " Hz outside the attacker band ["
         << lo << ", " << hi << "] Hz";
      out.push_back(os.str());
    }
  };
  for (const auto& e : schedule.entries) check(e.freq_hz);
  if (schedule.generator)
    for (double f : schedule.generator->freq_set) check(f);
  return out;
}

FrequencyTable prepare_table(const Scenario& sc) {
  FrequencyTable table;
  if (!sc.table_file.empty()) {
    std::ifstream is(sc.table_file);
    if (!is)
      throw ParseError("cannot open table file '" + sc.table_file + "'");
    table = read_table_csv(is, sc.table_file);
  } else {
    std::vector<double> freqs = sc.table_freqs;
    if (freqs.empty()) {
      for (const auto& e : sc.schedule.entries) freqs.push_back(e.freq_hz);
      if (sc.schedule.generator)
        for (double f : sc.schedule.generator->freq_set) freqs.push_back(f);
    }
    const auto [lo, hi] =
        achievable_band(sc.attacker.l_r, sc.attacker.c_r1, sc.attacker.c_r2);
    std::vector<double> in_band;
    for (double f : freqs)
      if (f >= lo && f <= hi) in_band.push_back(f);
    table = build_frequency_table(in_band, sc.attacker.l_r, sc.attacker.c_r1,
                                  sc.attacker.c_r2);
  }
  if (sc.calibrate) {
    CalibrationSetup setup;
    setup.plant = sc.attacker;
    setup.sense_mode = sc.controller.sense_mode;
    setup.t_filter = sc.controller.t_filter;
    setup.filter_stage_tau = sc.controller.filter_stage_tau;
    // Switch toggles land on step boundaries, so the phase resolution of a
    // trim is dt-limited; calibration needs a finer grid than the run.
    setup.dt = sc.sim.dt / 5.0;
    FrequencyTable calibrated;
    for (const auto& e : table.entries())
      calibrated.put(calibrate_entry(e, setup));
    table = calibrated;
  }
  return table;
}

PreparedRun prepare_run(const Scenario& sc) {
  PreparedRun out;
  out.inputs.attacker = sc.attacker;
  out.inputs.attacker_present = sc.attacker_present;
  for (const auto& spec : sc.fixed) {
    out.inputs.fixed.push_back(spec.rx);
    out.inputs.fixed_names.push_back(spec.name);
  }
  out.inputs.schedule = sc.schedule;
  out.inputs.defense = sc.defense;
  out.inputs.sim = sc.sim;
  if (sc.attacker_present && sc.controller_enabled) {
    out.controller = std::make_unique<InterceptController>(
        sc.controller, prepare_table(sc),
        DutyDesign{sc.attacker.l_r, sc.attacker.c_r1, sc.attacker.c_r2,
                   sc.attacker.r_load});
  }
  return out;
}

}  // namespace hoplock
