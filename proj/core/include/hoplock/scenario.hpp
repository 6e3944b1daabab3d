#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hoplock/design.hpp"
#include "hoplock/encryptor.hpp"
#include "hoplock/interceptor.hpp"
#include "hoplock/sim.hpp"

namespace hoplock {

struct FixedReceiverSpec {
  std::string name;
  FixedReceiver rx;
};

/// Fully validated run description parsed from a sectioned key-value file
/// with SI-unit suffixes (e.g. `c_r1 = 22nF`).
struct Scenario {
  SystemParams attacker;
  bool attacker_present = true;
  bool controller_enabled = true;
  std::vector<FixedReceiverSpec> fixed;
  ControllerConfig controller;
  std::string table_file;          ///< optional pre-built duty table (CSV)
  bool calibrate = false;          ///< calibrate table entries before the run
  std::vector<double> table_freqs; ///< defaults to the schedule's frequency set
  HopSchedule schedule;
  DefenseConfig defense;
  SimConfig sim;

  /// Schedule frequencies outside the attacker's achievable band. These
  /// are warnings, not errors; out-of-band hops are a legitimate experiment.
  std::vector<std::string> band_warnings() const;
};

Scenario parse_scenario(const std::string& path);
Scenario parse_scenario_text(std::string_view text, const std::string& name);

/// Run inputs plus the attack controller built from a scenario: the duty
/// table is loaded or computed (and calibrated when requested).
struct PreparedRun {
  RunInputs inputs;
  std::unique_ptr<InterceptController> controller;
};

PreparedRun prepare_run(const Scenario& scenario);

/// The duty table a scenario's controller starts from.
FrequencyTable prepare_table(const Scenario& scenario);

}  // namespace hoplock
