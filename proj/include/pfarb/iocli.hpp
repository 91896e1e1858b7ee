#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfarb/formulations.hpp"
#include "pfarb/mip.hpp"
#include "pfarb/model.hpp"

namespace pfarb {

/// Full configuration of one deterministic run, serialized into every report
/// record so results are self-describing.
struct RunConfig {
  FormulationId formulation = FormulationId::plt;
  std::string preset = "1C";          ///< "0.25C" | "1C" | "2C" | "custom"
  std::string converter = "matched";  ///< "matched" | "undersized" | "oversized"
  BatteryParams battery;
  double pf_min = 0.9;
  int polygon_m = kDefaultPolygonSides;
  double lambda = kDefaultLambda;
  double beta = kDefaultBeta;
  MipConfig mip;
  std::uint64_t seed = 1;

  /// Deterministic sort key: preset/converter/formulation.
  std::string key() const;
};

std::string to_string(FormulationId id);
FormulationId formulation_from_string(const std::string& name);

/// Ramp-rate preset ("0.25C", "1C", "2C") with the converter sized as a factor
/// of the max charging power ("matched" = 1, "undersized" = 0.9,
/// "oversized" = 1.25).
BatteryParams battery_preset(const std::string& preset, const std::string& converter);

/// Parses `timestamp,load_p_kw,load_q_kvar,pv_p_kw,price_per_kwh` CSV.
/// Timestamps (hours, or ISO date-times) must be strictly increasing and
/// uniformly spaced; their spacing defines h. The pv column may be absent.
Scenario load_scenario(const std::string& path);

void save_scenario(const Scenario& scenario, const std::string& path);

enum class SynthProfile { residential_pv, flat, adversarial };

SynthProfile profile_from_string(const std::string& name);

/// Deterministic one-day scenario (N = 96, h = 0.25) per seed and profile.
Scenario synth_scenario(std::uint64_t seed, SynthProfile profile);

/// One report record: config, solve status, metrics, dispatch.
struct RunRecord {
  RunConfig config;
  std::string status;  ///< "optimal" | "feasible_incumbent" | "N.F." | ...
  bool feasible = false;
  Metrics metrics;
  Dispatch dispatch;
};

/// Writes a versioned JSON report; records sorted by config key, infeasible
/// cells marked "N.F." with no metrics.
void emit_results(const std::vector<RunRecord>& records, const std::string& path);

/// Per-step dispatch CSV next to the report.
void write_dispatch_csv(const Scenario& scenario, const Dispatch& dispatch,
                        const std::string& path);

}  // namespace pfarb
