#include <algorithm>
#include <cmath>
#include <sstream>

#include "hoplock/design.hpp"
#include "hoplock/interceptor.hpp"
#include "hoplock/sim.hpp"

namespace hoplock {

FrequencyTableEntry calibrate_entry(const FrequencyTableEntry& entry,
                                    const CalibrationSetup& setup) {
  setup.plant.validate();
  const double period = 1.0 / entry.freq_hz;

  // Near the lower band edge the required t_on exceeds what the filter
  // bound leaves room for; tuning is skipped and the switch simply stays
  // closed, which is the C_R1 + C_R2 resonance the entry is after anyway.
  if (entry.duty.t_on > period / 2.0 - 2.0 * setup.t_filter) {
    FrequencyTableEntry out = entry;
    out.duty.period = period;
    out.duty.t_on = period / 2.0;
    out.duty.t_off = 0.0;
    out.origin = EntryOrigin::kComputed;
    return out;
  }

  ControllerConfig cc;
  cc.sense_mode = setup.sense_mode;
  cc.t_filter = setup.t_filter;
  cc.filter_stage_tau = setup.filter_stage_tau;
  cc.estimation_window = std::max(100e-6, 4.0 * period);
  cc.phase_tolerance_deg = std::max(0.1, setup.phase_target_tol_deg / 2.0);
  cc.calibration_mode = true;
  cc.regulation_enabled = true;

  FrequencyTable table;
  table.put(entry);
  InterceptController controller(
      cc, table,
      {setup.plant.l_r, setup.plant.c_r1, setup.plant.c_r2,
       setup.plant.r_load});

  RunInputs in;
  in.attacker = setup.plant;
  in.sim.dt = setup.dt;
  in.sim.duration = cc.estimation_window + 20.0 * period +
                    (setup.max_trims + 6) * kTrimCyclePeriods * period;
  in.schedule.entries.push_back({entry.freq_hz, in.sim.duration});
  in.sim.record_decimation = 64;  // trace discarded; keep memory small

  run(in, &controller);

  if (!controller.calibration_converged()) {
    std::ostringstream os;
    os << "calibration at " << entry.freq_hz << " Hz did not converge within "
       << setup.max_trims << " trims (last phase error "
       << controller.state().phase_error_deg << " deg)";
    throw CalibrationError(os.str());
  }

  FrequencyTableEntry out = entry;
  out.duty.period = period;
  out.duty.t_on =
      std::clamp(controller.active_duty().t_on, 0.0, period / 2.0);
  out.duty.t_off = period / 2.0 - out.duty.t_on;
  out.origin = EntryOrigin::kCalibrated;
  return out;
}

}  // namespace hoplock
