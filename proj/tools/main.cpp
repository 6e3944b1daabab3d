// Command-line front end: capacitor design checks, duty tables, scenario
// simulation, duty sweeps, and trace re-analysis.
//
// Exit codes: 0 success, 1 usage/parse error, 2 numerical failure,
// 3 an asserted threshold was violated.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "hoplock/design.hpp"
#include "hoplock/errors.hpp"
#include "hoplock/metrics.hpp"
#include "hoplock/report.hpp"
#include "hoplock/scenario.hpp"

namespace fs = std::filesystem;
using namespace hoplock;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitNumeric = 2, kExitThreshold = 3;

fs::path output_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("HOPLOCK_OUT_DIR"); env && *env)
    return env;
  return ".";
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << body;
}

SenseMode parse_sense(const std::string& s) {
  if (s == "cap" || s == "capacitor") return SenseMode::kCapacitorVoltage;
  if (s == "load") return SenseMode::kLoadVoltage;
  throw ConfigError("sense mode must be 'cap' or 'load'");
}

int cmd_design(double f_low, double f_high, double l_r, double t_filter,
               const std::string& sense, double c_r1, double c_r2,
               bool require_feasible) {
  DesignBand band;
  band.f_l = f_low;
  band.f_h = f_high;
  band.t_filter = t_filter;
  band.sense_mode = parse_sense(sense);
  std::optional<double> cand1, cand2;
  if (c_r1 > 0) cand1 = c_r1;
  if (c_r2 > 0) cand2 = c_r2;
  const SelectionReport rep = select_capacitors(band, l_r, cand1, cand2);
  std::cout << "c_r1_max_f," << format_double(rep.c_r1_max) << "\n"
            << "c_r2_min_f," << format_double(rep.c_r2_min) << "\n";
  if (cand1) std::cout << "c_r1_feasible," << rep.c_r1_feasible << "\n";
  if (cand2) std::cout << "c_r2_feasible," << rep.c_r2_feasible << "\n";
  if (cand1 && cand2) {
    const auto [lo, hi] = achievable_band(l_r, *cand1, *cand2);
    std::cout << "band_low_hz," << format_double(lo) << "\n"
              << "band_high_hz," << format_double(hi) << "\n";
  }
  const bool ok = (!cand1 || rep.c_r1_feasible) && (!cand2 || rep.c_r2_feasible);
  if (require_feasible && !ok) {
    std::cerr << "design: candidate capacitors do not cover the band\n";
    return kExitThreshold;
  }
  return kExitOk;
}

int cmd_table(const std::string& scenario_path, std::vector<double> freqs,
              double l_r, double c_r1, double c_r2, bool calibrate,
              const std::string& out_flag, const std::string& file_name) {
  FrequencyTable table;
  if (!scenario_path.empty()) {
    Scenario sc = parse_scenario(scenario_path);
    if (!freqs.empty()) sc.table_freqs = freqs;
    sc.calibrate = calibrate || sc.calibrate;
    table = prepare_table(sc);
  } else {
    if (freqs.empty()) throw ConfigError("no frequencies given");
    table = build_frequency_table(freqs, l_r, c_r1, c_r2);
    if (calibrate) {
      CalibrationSetup setup;
      setup.plant.l_r = l_r;
      setup.plant.c_r1 = c_r1;
      setup.plant.c_r2 = c_r2;
      FrequencyTable calibrated;
      for (const auto& e : table.entries())
        calibrated.put(calibrate_entry(e, setup));
      table = calibrated;
    }
  }
  std::ostringstream body;
  write_table_csv(table, body);
  if (file_name == "-") {
    std::cout << body.str();
  } else {
    const fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);
    write_file(dir / file_name, body.str());
    std::cout << dir / file_name << "\n";
  }
  return kExitOk;
}

struct SimFlags {
  std::string out_flag;
  int jobs = 1;
  bool require_lock = false;
  double min_stolen = -1.0;
};

int simulate_one(const std::string& path, const SimFlags& flags,
                 std::mutex& io_mutex) {
  Scenario sc = parse_scenario(path);
  {
    std::lock_guard<std::mutex> lock(io_mutex);
    for (const auto& w : sc.band_warnings())
      std::cerr << "warning: " << w << "\n";
  }
  PreparedRun prep = prepare_run(sc);
  const RunResult result = run(prep.inputs, prep.controller.get());
  const Metrics metrics = compute_metrics(result.trace);

  const fs::path dir = output_dir(flags.out_flag);
  fs::create_directories(dir);
  const std::string stem = fs::path(path).stem().string();
  auto emit = [&](const char* suffix, auto&& writer) {
    std::ostringstream body;
    writer(body);
    write_file(dir / (stem + suffix), body.str());
  };
  emit("_trace.csv", [&](std::ostream& os) { write_trace_csv(result.trace, os); });
  emit("_metrics.csv", [&](std::ostream& os) {
    write_metrics_csv(metrics, prep.inputs.fixed_names, os);
  });
  emit("_schedule.csv",
       [&](std::ostream& os) { write_schedule_csv(result.hops, os); });
  emit("_currents.svg",
       [&](std::ostream& os) { write_current_plot_svg(result.trace, os); });
  emit("_controller.svg",
       [&](std::ostream& os) { write_controller_plot_svg(result.trace, os); });
  if (prep.controller) {
    emit("_table.csv", [&](std::ostream& os) {
      write_table_csv(prep.controller->table(), os);
    });
  }

  int rc = kExitOk;
  {
    std::lock_guard<std::mutex> lock(io_mutex);
    std::cout << stem << ": " << metrics.hops.size() << " hops -> " << dir
              << "\n";
    for (const auto& h : metrics.hops) {
      std::cout << "  hop " << h.index << " @ " << h.freq_hz / 1e3 << " kHz: "
                << (h.lock.locked ? "locked " + format_double(h.lock.seconds)
                                  : std::string("not locked"))
                << " stolen_ratio " << h.stolen_ratio << "\n";
      if (flags.require_lock && !h.lock.locked) rc = kExitThreshold;
      if (flags.min_stolen >= 0 && h.stolen_ratio < flags.min_stolen)
        rc = kExitThreshold;
    }
    for (const auto& e : result.events) std::cout << "  " << e << "\n";
    if (rc == kExitThreshold)
      std::cerr << stem << ": lock/stolen-power assertion failed\n";
  }
  return rc;
}

int cmd_simulate(const std::vector<std::string>& paths, const SimFlags& flags) {
  std::mutex io_mutex;
  std::vector<int> results(paths.size(), kExitOk);
  const int jobs = std::max(1, flags.jobs);
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= paths.size()) return;
        i = next++;
      }
      try {
        results[i] = simulate_one(paths[i], flags, io_mutex);
      } catch (const NumericError& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cerr << paths[i] << ": " << e.what() << "\n";
        results[i] = kExitNumeric;
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::cerr << paths[i] << ": " << e.what() << "\n";
        results[i] = kExitUsage;
      }
    }
  };
  for (int j = 0; j < std::min<int>(jobs, int(paths.size())); ++j)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int rc = kExitOk;
  for (int r : results) rc = std::max(rc, r);
  return rc;
}

int cmd_sweep(const std::string& scenario_path, double freq, double t_off_min,
              double t_off_max, int points, const std::string& out_flag,
              const std::string& file_name) {
  Scenario sc = parse_scenario(scenario_path);
  if (points < 2) throw ConfigError("need at least 2 sweep points");
  std::vector<double> t_offs;
  for (int i = 0; i < points; ++i)
    t_offs.push_back(t_off_min +
                     (t_off_max - t_off_min) * i / double(points - 1));
  const auto curve = duty_sweep(sc, freq, t_offs);
  std::ostringstream body;
  body << "t_off_s,i_r_amplitude_a,phase_deg\n";
  for (const auto& p : curve)
    body << format_double(p.t_off) << ',' << format_double(p.i_r_amplitude)
         << ',' << format_double(p.phase_deg) << '\n';
  if (file_name == "-") {
    std::cout << body.str();
  } else {
    const fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);
    write_file(dir / file_name, body.str());
    std::cout << dir / file_name << "\n";
  }
  return kExitOk;
}

int cmd_analyze(const std::string& trace_path, double min_stolen,
                bool require_lock) {
  std::ifstream is(trace_path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + trace_path);
  const Trace trace = read_trace_csv(is, fs::path(trace_path).filename());
  const Metrics metrics = compute_metrics(trace);
  std::vector<std::string> fixed_names(trace.rx_names.begin() +
                                           (trace.has_attacker() ? 1 : 0),
                                       trace.rx_names.end());
  write_metrics_csv(metrics, fixed_names, std::cout);
  for (const auto& h : metrics.hops) {
    if (require_lock && !h.lock.locked) return kExitThreshold;
    if (min_stolen >= 0 && h.stolen_ratio < min_stolen) return kExitThreshold;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-hopping wireless power transfer attack toolkit"};
  app.require_subcommand(1);
  std::string out_flag;
  app.add_option("--out", out_flag,
                 "output directory (overrides HOPLOCK_OUT_DIR)");

  auto* design = app.add_subcommand("design", "capacitor selection bounds");
  double f_low = 0, f_high = 0, l_r = 38e-6, t_filter = 0, c1 = 0, c2 = 0;
  std::string sense = "cap";
  bool require_feasible = false;
  design->add_option("--f-low", f_low, "band low edge [Hz]")->required();
  design->add_option("--f-high", f_high, "band high edge [Hz]")->required();
  design->add_option("--l-r", l_r, "receiver inductance [H]");
  design->add_option("--t-filter", t_filter, "comparator filter time [s]");
  design->add_option("--sense", sense, "sense mode: cap|load");
  design->add_option("--c-r1", c1, "candidate C_R1 [F]");
  design->add_option("--c-r2", c2, "candidate C_R2 [F]");
  design->add_flag("--require-feasible", require_feasible,
                   "exit 3 when a candidate fails its bound");

  auto* table = app.add_subcommand("table", "build or calibrate a duty table");
  std::string table_scenario, table_file = "-";
  std::vector<double> table_freqs;
  double tl_r = 38e-6, tc1 = 22e-9, tc2 = 147e-9;
  bool calibrate = false;
  table->add_option("--scenario", table_scenario,
                    "take plant and frequencies from a scenario file");
  table->add_option("--freq", table_freqs, "table frequency [Hz], repeatable");
  table->add_option("--l-r", tl_r, "receiver inductance [H]");
  table->add_option("--c-r1", tc1, "fixed capacitor [F]");
  table->add_option("--c-r2", tc2, "switched capacitor [F]");
  table->add_flag("--calibrate", calibrate, "phase-calibrate every entry");
  table->add_option("--file", table_file, "output file name, '-' for stdout");

  auto* simulate = app.add_subcommand("simulate", "run scenario files");
  SimFlags sim_flags;
  std::vector<std::string> scenario_paths;
  simulate->add_option("scenarios", scenario_paths, "scenario files")
      ->required();
  simulate->add_option("--jobs", sim_flags.jobs, "concurrent scenarios");
  simulate->add_flag("--require-lock", sim_flags.require_lock,
                     "exit 3 unless every hop locks");
  simulate->add_option("--min-stolen", sim_flags.min_stolen,
                       "exit 3 when any hop's stolen ratio is lower");

  auto* sweep = app.add_subcommand("sweep", "steady-state response vs t_off");
  std::string sweep_scenario, sweep_file = "-";
  double sweep_freq = 65e3, sweep_lo = 0, sweep_hi = 0;
  int sweep_points = 9;
  sweep->add_option("scenario", sweep_scenario, "scenario file")->required();
  sweep->add_option("--freq", sweep_freq, "excitation frequency [Hz]");
  sweep->add_option("--t-off-min", sweep_lo, "first off time [s]")->required();
  sweep->add_option("--t-off-max", sweep_hi, "last off time [s]")->required();
  sweep->add_option("--points", sweep_points, "sweep points");
  sweep->add_option("--file", sweep_file, "output file name, '-' for stdout");

  auto* analyze = app.add_subcommand("analyze", "recompute metrics from a trace");
  std::string trace_path;
  double an_min_stolen = -1.0;
  bool an_require_lock = false;
  analyze->add_option("trace", trace_path, "trace CSV")->required();
  analyze->add_option("--min-stolen", an_min_stolen,
                      "exit 3 when any hop's stolen ratio is lower");
  analyze->add_flag("--require-lock", an_require_lock,
                    "exit 3 unless every hop locks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*design)
      return cmd_design(f_low, f_high, l_r, t_filter, sense, c1, c2,
                        require_feasible);
    if (*table)
      return cmd_table(table_scenario, table_freqs, tl_r, tc1, tc2, calibrate,
                       out_flag, table_file);
    if (*simulate) {
      sim_flags.out_flag = out_flag;
      return cmd_simulate(scenario_paths, sim_flags);
    }
    if (*sweep)
      return cmd_sweep(sweep_scenario, sweep_freq, sweep_lo, sweep_hi,
                       sweep_points, out_flag, sweep_file);
    if (*analyze)
      return cmd_analyze(trace_path, an_min_stolen, an_require_lock);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
