#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pfarb/forecast.hpp"
#include "pfarb/formulations.hpp"
#include "pfarb/mip.hpp"
#include "pfarb/model.hpp"

namespace pfarb {

/// Training series for the online controller, aligned with the scenario grid.
struct ForecastHistory {
  std::vector<double> net_p;   ///< load minus solar (kW)
  std::vector<double> net_q;   ///< kvar
  std::vector<double> price;   ///< $/kWh
};

struct MpcConfig {
  FormulationId formulation = FormulationId::plt;
  double lambda = kDefaultLambda;
  double beta = kDefaultBeta;
  int polygon_m = kDefaultPolygonSides;
  MipConfig mip;
  bool perfect_forecast = false;
  /// Multiplier on forecast prices strictly beyond the current step; the
  /// current step's price is metered and stays exact. 1 = uncorrupted.
  double price_forecast_scale = 1.0;
  int arma_lags = 4;
  int arma_deviation_terms = 3;
  int arma_past_days = 7;
  double l1_weight_factor = 1e-3;  ///< l1 weight as a fraction of residual variance
  std::ostream* event_log = nullptr;
};

struct MpcRun {
  Dispatch committed;
  std::vector<std::string> per_step_solve_status;
  Metrics realized_metrics;
  int fallback_events = 0;  ///< steps where the formulation was infeasible and
                            ///< the penalty formulation stood in
};

/// Online driver: forecast to end of horizon, solve, commit the first action,
/// advance the battery, repeat.
MpcRun run_mpc(const Scenario& realized, const ForecastHistory& history,
               const BatteryParams& params, const PFLimit& limit, const MpcConfig& config);

struct RhResult {
  bool feasible = false;       ///< false = N.F. (some step had no feasible sub-problem)
  int infeasible_step = -1;
  Dispatch dispatch;
  std::vector<int> chosen_sub;  ///< 1 or 2 per committed step
};

/// Deterministic receding-horizon driver: per step solves the two
/// sign-restricted sub-problems and commits the better feasible one.
RhResult run_receding_horizon(const Scenario& scenario, const BatteryParams& params,
                              const PFLimit& limit, const DiskPolygon& polygon,
                              const SolverConfig& qp = {}, std::ostream* event_log = nullptr);

}  // namespace pfarb
